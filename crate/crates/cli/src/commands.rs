use std::io::Write;
use std::path::Path;
use std::time::Instant;

use lrtrack::eval::{dice, endpoint_error, numerical_rank, DEFAULT_RANK_TOL};
use lrtrack::grid::normalize_shared;
use lrtrack::phantoms::{
    linear_disk_path, make_blob_video, make_c, make_circle, make_disk_sequence, textured_warp, BlobVideoSpec,
    DiskGeometry,
};
use lrtrack::render::{render_grid, render_hsv};
use lrtrack::rpca::Matrix;
use lrtrack::tracker::{vectorize_stack, CasoratiMatrix};
use lrtrack::{register_pair, rpca_decompose, Image, ImageStack, LabelMap};
use serde_json::{json, Value};

use crate::config::{RunConfig, SynthKind};
use crate::error::CliError;
use crate::formats::{
    encode_field, encode_image, encode_labels, encode_luma_png, encode_matrix, encode_rgb_png, frame_name,
    read_field, read_frames, read_image, read_labels, read_matrix, write_atomic, ImageKind, Output,
};
use crate::{Metric, Style};

const GRID_SPACING: usize = 8;

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn report_bytes(report: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("report values serialize");
    out.push(b'\n');
    out
}

fn header(command: &str, config: &RunConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("tool".into(), json!("lrtrack"));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    m.insert("config".into(), to_json(config));
    m
}

fn put_image(out: &mut Output, rel: &str, img: &Image) -> Result<(), CliError> {
    out.put(rel, &encode_image(img, ImageKind::Png, true)?)
}

fn put_mask(out: &mut Output, rel: &str, mask: &LabelMap) -> Result<(), CliError> {
    out.put(rel, &encode_labels(mask, ImageKind::Png)?)
}

fn put_stack(out: &mut Output, dir: &str, frames: &[Image]) -> Result<(), CliError> {
    for (j, f) in frames.iter().enumerate() {
        put_image(out, &format!("{dir}/{}", frame_name(j, "png")), f)?;
    }
    Ok(())
}

fn put_masks(out: &mut Output, dir: &str, masks: &[LabelMap]) -> Result<(), CliError> {
    for (j, m) in masks.iter().enumerate() {
        put_mask(out, &format!("{dir}/{}", frame_name(j, "png")), m)?;
    }
    Ok(())
}

pub fn synth(config: &Path, output: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(Some(config))?;
    let s = &cfg.synth;
    let (h, w) = (s.height, s.width);
    let center = (s.center_x.unwrap_or(w as f64 / 2.0), s.center_y.unwrap_or(h as f64 / 2.0));
    let mut out = Output::directory(output)?;
    let mut files = Vec::new();
    let mut add_image = |out: &mut Output, name: &str, img: &Image, mask: bool| -> Result<(), CliError> {
        put_image(out, &format!("{name}.png"), img)?;
        files.push(format!("{name}.png"));
        if mask {
            put_mask(out, &format!("{name}_mask.png"), &img.threshold(0.5))?;
            files.push(format!("{name}_mask.png"));
        }
        Ok(())
    };
    match s.kind {
        SynthKind::Circle => add_image(&mut out, "circle", &make_circle(h, w, center, s.radius)?, true)?,
        SynthKind::CShape => {
            let c = make_c(h, w, center, s.radius, s.thickness, s.gap_degrees)?;
            add_image(&mut out, "c_shape", &c, true)?
        }
        SynthKind::CircleToC => {
            add_image(&mut out, "source", &make_circle(h, w, center, s.radius)?, true)?;
            let c = make_c(h, w, center, s.radius, s.thickness, s.gap_degrees)?;
            add_image(&mut out, "target", &c, true)?;
        }
        SynthKind::DiskSequence => {
            let start = DiskGeometry { cx: center.0 - s.shift_x, cy: center.1 - s.shift_y, radius: s.radius };
            let end = DiskGeometry { cx: center.0, cy: center.1, radius: s.radius_end };
            let seq = make_disk_sequence(h, w, &linear_disk_path(s.frames, start, end))?;
            put_stack(&mut out, "frames", seq.frames.frames())?;
            put_masks(&mut out, "masks", &seq.masks)?;
            let last = seq.frames.frames().last().expect("at least two frames");
            add_image(&mut out, "target", last, true)?;
        }
        SynthKind::BlobVideo => {
            let spec = BlobVideoSpec {
                height: h,
                width: w,
                frames: s.frames,
                seed: s.seed,
                blob_amplitude: s.blob_amplitude,
                blob_radius: s.blob_radius,
                path_start: (0.125 * w as f64, 0.3125 * h as f64),
                path_end: (0.875 * w as f64, 0.6875 * h as f64),
                noise_sigma: s.noise_sigma,
            };
            let video = make_blob_video(&spec)?;
            put_stack(&mut out, "frames", video.frames.frames())?;
            put_masks(&mut out, "masks", &video.blob_masks)?;
            add_image(&mut out, "background", &video.background, false)?;
        }
        SynthKind::TexturedWarp => {
            let tw = textured_warp(h, w, s.warp_amplitude, s.seed)?;
            add_image(&mut out, "source", &tw.source, false)?;
            add_image(&mut out, "target", &tw.target, false)?;
            out.put("truth.fld", &encode_field(&tw.truth)?)?;
            files.push("truth.fld".into());
        }
    }
    let mut report = header("synth", &cfg);
    report.insert("files".into(), json!(files));
    out.put("synth.json", &report_bytes(&Value::Object(report)))?;
    out.commit()?;
    Ok(())
}

fn read_pair(source: &Path, target: &Path) -> Result<(Image, Image), CliError> {
    let (src, tgt) = (read_image(source)?, read_image(target)?);
    if src.dims() != tgt.dims() {
        return Err(CliError::data(format!(
            "{} is {}x{} but {} is {}x{}",
            source.display(),
            src.height(),
            src.width(),
            target.display(),
            tgt.height(),
            tgt.width()
        )));
    }
    let mut n = normalize_shared(&[&src, &tgt]).into_iter();
    Ok((n.next().expect("two images"), n.next().expect("two images")))
}

pub fn register(source: &Path, target: &Path, config: Option<&Path>, output: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let (src, tgt) = read_pair(source, target)?;
    let start = Instant::now();
    let result = register_pair(&src, &tgt, &cfg.registration)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut out = Output::directory(output)?;
    out.put("flow.fld", &encode_field(&result.flow)?)?;
    put_image(&mut out, "warped.png", &result.warped_source)?;
    out.put("hsv.png", &encode_rgb_png(&render_hsv(&result.flow)?)?)?;
    out.put("grid.png", &encode_luma_png(&render_grid(&result.flow, GRID_SPACING)?)?)?;
    let mut report = header("register", &cfg);
    report.insert("source".into(), json!(source.display().to_string()));
    report.insert("target".into(), json!(target.display().to_string()));
    report.insert("final_residual".into(), json!(result.final_residual()));
    report.insert("flow_max_abs".into(), json!(result.flow.max_abs()));
    report.insert(
        "inner_iterations".into(),
        json!(result.levels.iter().map(|l| l.inner_iterations.iter().sum::<usize>()).sum::<usize>()),
    );
    report.insert("levels".into(), to_json(&result.levels));
    report.insert("wall_seconds".into(), json!(seconds));
    out.put("report.json", &report_bytes(&Value::Object(report)))?;
    out.commit()?;
    Ok(())
}

fn ranks(m: &Matrix) -> Result<Value, CliError> {
    let r = numerical_rank(m, DEFAULT_RANK_TOL)?;
    Ok(json!({ "rank": r.rank, "rel_tol": r.rel_tol, "singular_values": r.singular_values }))
}

pub fn track(frames: &Path, target: &Path, config: Option<&Path>, output: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    if !frames.is_dir() {
        return Err(CliError::data(format!("{}: expected a directory of frame_NNN images", frames.display())));
    }
    let raw = read_frames(frames)?;
    let tgt = read_image(target)?;
    let mut all: Vec<&Image> = raw.iter().collect();
    all.push(&tgt);
    let mut norm = normalize_shared(&all);
    let tgt = norm.pop().expect("target present");
    let stack = ImageStack::new(norm)?;
    if stack.frame_dims() != tgt.dims() {
        return Err(CliError::data(format!(
            "frames are {:?} but {} is {:?}",
            stack.frame_dims(),
            target.display(),
            tgt.dims()
        )));
    }
    let tracking = cfg.tracking();
    let start = Instant::now();
    let result = lrtrack::track(&stack, &tgt, &tracking)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut out = Output::directory(output)?;
    for (j, f) in result.flows.iter().enumerate() {
        out.put(format!("flows/{}", frame_name(j, "fld")), &encode_field(f)?)?;
    }
    put_stack(&mut out, "warped", result.warped_stack.frames())?;
    put_stack(&mut out, "lowrank", result.lowrank_stack.frames())?;
    out.put("L.mat", &encode_matrix(result.l.matrix())?)?;
    out.put("S.mat", &encode_matrix(result.s.matrix())?)?;
    let rank = json!({
        "exact_rank_l": result.rank,
        "l": ranks(result.l.matrix())?,
        "lowrank_plus_target": ranks(vectorize_stack(&result.lowrank_stack).matrix())?,
        "warped": ranks(vectorize_stack(&result.warped_stack).matrix())?,
    });
    out.put("rank.json", &report_bytes(&rank))?;
    let mut report = header("track", &cfg);
    report.insert("frames".into(), json!(stack.len()));
    report.insert("rank_l".into(), json!(result.rank));
    report.insert(
        "inner_iterations".into(),
        json!(result.levels.iter().map(|l| l.inner_iterations.iter().sum::<usize>()).sum::<usize>()),
    );
    report.insert("levels".into(), to_json(&result.levels));
    report.insert("wall_seconds".into(), json!(seconds));
    out.put("report.json", &report_bytes(&Value::Object(report)))?;
    out.commit()?;
    Ok(())
}

enum MatrixInput {
    Matrix(Matrix),
    Frames(CasoratiMatrix),
}

fn read_matrix_input(path: &Path) -> Result<MatrixInput, CliError> {
    if path.is_dir() {
        let stack = ImageStack::new(read_frames(path)?)?;
        Ok(MatrixInput::Frames(vectorize_stack(&stack)))
    } else {
        Ok(MatrixInput::Matrix(read_matrix(path)?))
    }
}

pub fn rpca(input: &Path, config: Option<&Path>, output: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let data = read_matrix_input(input)?;
    let m = match &data {
        MatrixInput::Matrix(m) => m,
        MatrixInput::Frames(c) => c.matrix(),
    };
    let start = Instant::now();
    let result = rpca_decompose(m, &cfg.rpca)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut out = Output::directory(output)?;
    out.put("L.mat", &encode_matrix(&result.l)?)?;
    out.put("S.mat", &encode_matrix(&result.s)?)?;
    if let MatrixInput::Frames(c) = &data {
        let (h, w) = c.frame_dims();
        let low = CasoratiMatrix::new(h, w, result.l.clone())?.devectorize()?;
        put_stack(&mut out, "lowrank", low.frames())?;
    }
    let mut csv = String::from("iteration,residual\n");
    for (k, r) in result.residuals.iter().enumerate() {
        csv.push_str(&format!("{},{r:e}\n", k + 1));
    }
    out.put("residuals.csv", csv.as_bytes())?;
    let mut report = header("rpca", &cfg);
    report.insert("rows".into(), json!(m.nrows()));
    report.insert("cols".into(), json!(m.ncols()));
    report.insert("resolved".into(), to_json(&result.params));
    report.insert("iterations".into(), json!(result.iterations));
    report.insert("converged".into(), json!(result.converged));
    report.insert("final_residual".into(), json!(result.final_residual()));
    report.insert("rank_l".into(), json!(result.rank));
    report.insert("wall_seconds".into(), json!(seconds));
    out.put("report.json", &report_bytes(&Value::Object(report)))?;
    out.commit()?;
    Ok(())
}

fn read_mask(path: &Path, threshold: Option<f64>) -> Result<LabelMap, CliError> {
    match threshold {
        Some(t) => Ok(read_image(path)?.threshold(t)),
        None => read_labels(path),
    }
}

pub fn eval(metric: Metric) -> Result<(), CliError> {
    let report = match metric {
        Metric::Dice { a, b, threshold } => {
            let r = dice(&read_mask(&a, threshold)?, &read_mask(&b, threshold)?, None)?;
            json!({ "metric": "dice", "mean": r.mean, "scores": r.scores, "labels": r.labels })
        }
        Metric::Rank { input, rel_tol } => {
            if !(rel_tol > 0.0 && rel_tol < 1.0) {
                return Err(CliError::usage(format!("--rel-tol must be in (0, 1), got {rel_tol}")));
            }
            let m = match read_matrix_input(&input)? {
                MatrixInput::Matrix(m) => m,
                MatrixInput::Frames(c) => c.into_matrix(),
            };
            let r = numerical_rank(&m, rel_tol)?;
            json!({
                "metric": "rank",
                "rank": r.rank,
                "rel_tol": r.rel_tol,
                "singular_values": r.singular_values,
            })
        }
        Metric::Epe { flow, truth, margin } => {
            let e = endpoint_error(&read_field(&flow)?, &read_field(&truth)?, margin)?;
            json!({ "metric": "epe", "mean": e.mean, "median": e.median, "count": e.count, "margin": margin })
        }
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report values serialize");
    text.push('\n');
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::data(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

pub fn render(style: Style) -> Result<(), CliError> {
    let (bytes, output) = match style {
        Style::Hsv { field, output } => (encode_rgb_png(&render_hsv(&read_field(&field)?)?)?, output),
        Style::Grid { field, output, spacing } => {
            (encode_luma_png(&render_grid(&read_field(&field)?, spacing)?)?, output)
        }
    };
    if output.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() != Some("png") {
        return Err(CliError::usage(format!("{}: render output must be a .png file", output.display())));
    }
    write_atomic(&output, &bytes)
}
