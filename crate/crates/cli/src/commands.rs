use std::io::Write;
use std::path::Path;

use log::info;
use modalbank::bench::run_bench;
use modalbank::dataset::{build, Dataset};
use modalbank::eval::{eval_metrics, EvalReport};
use modalbank::filterbank::render_recursive;
use modalbank::geometry::{gen_convex_shape, triangulate};
use modalbank::modal_render::{excite, render_ir};
use modalbank::optim::{fit, fit_mel, write_history_csv};
use modalbank::predictor::{load_checkpoint, save_checkpoint, split_by_shape, train, Predictor, TrainLog};
use modalbank::rng::{derive_seed, rng_from_seed};
use modalbank::{AudioBuffer, Error, FilterBankParams, Result, SosBank, SpectralContext};
use serde_json::{json, Value};

use crate::cli::{BenchArgs, EvalArgs, FitArgs, GenDatasetArgs, GenShapesArgs, RenderArgs, SplitChoice, TrainArgs};
use crate::config::Config;

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn gen_shapes(cfg: &Config, a: &GenShapesArgs) -> Result<Value> {
    use rand::Rng as _;
    std::fs::create_dir_all(&a.out)?;
    let triangles = a.triangles.unwrap_or(cfg.dataset.target_triangles);
    let [lo, hi] = cfg.dataset.n_boundary;
    let mut files = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let seed = derive_seed(cfg.seed, &[i as u64]);
        let n = a.n_boundary.unwrap_or_else(|| rng_from_seed(seed).random_range(lo..=hi));
        let shape = gen_convex_shape(n, seed)?;
        let mesh = triangulate(&shape, triangles, seed)?;
        let shape_path = a.out.join(format!("shape_{i:04}.json"));
        let mesh_path = a.out.join(format!("mesh_{i:04}.json"));
        write_json(&shape_path, &shape.to_file(seed))?;
        write_json(&mesh_path, &mesh)?;
        files.push(json!({
            "shape": shape_path, "mesh": mesh_path,
            "n_boundary": n, "vertices": mesh.n_vertices(), "faces": mesh.n_faces(),
        }));
    }
    Ok(json!({ "count": a.count, "files": files }))
}

pub fn gen_dataset(cfg: &Config, a: &GenDatasetArgs) -> Result<Value> {
    let mut dc = cfg.dataset_config();
    if let Some(s) = a.shapes {
        dc.n_shapes = s;
    }
    if let Some(r) = a.materials {
        dc.materials_per_shape = r;
    }
    if let Some(p) = a.positions {
        dc.positions_per_pair = p;
    }
    let m = build(&dc, &a.out)?;
    Ok(json!({
        "dir": a.out,
        "shapes": m.shapes.len(),
        "pairs": m.pairs.len(),
        "samples": m.samples.len(),
        "skipped": m.skipped_samples(),
    }))
}

pub fn fit_cmd(cfg: &Config, a: &FitArgs) -> Result<Value> {
    let mut spectral = cfg.spectral;
    let target = AudioBuffer::read_wav(&a.target)?;
    if target.sample_rate != spectral.sample_rate {
        return Err(Error::invalid(format!(
            "target is {} Hz, config expects {} Hz",
            target.sample_rate, spectral.sample_rate
        )));
    }
    let mut samples = target.samples;
    // Targets shorter than N are zero-padded, longer ones truncated.
    samples.resize(spectral.n_samples, 0.0);
    spectral.n_samples = samples.len();
    let ctx = SpectralContext::new(spectral)?;
    let mut budget = cfg.fit_budget();
    if let Some(s) = a.steps {
        budget.max_steps = s;
    }
    if let Some(lr) = a.lr {
        budget.adam.lr = lr;
    }
    if let Some(p) = a.patience {
        budget.patience = p;
    }
    let topology = a.topology.unwrap_or(cfg.fit.topology);
    let out = fit(&AudioBuffer::new(samples, spectral.sample_rate), topology, &ctx, &budget)?;
    write_json(&a.out, &out.params)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&a.history)?);
    write_history_csv(&out.history, &mut csv)?;
    csv.flush()?;
    if let Some(p) = &a.sos {
        write_json(p, &out.params.to_sos())?;
    }
    Ok(json!({
        "topology": topology.to_string(),
        "initial_loss": out.initial_loss,
        "best_loss": out.best_loss,
        "steps": out.history.len() - 1,
        "stopped_early": out.stopped_early,
        "params": a.out,
        "history": a.history,
    }))
}

fn write_train_log(path: &Path, log: &[TrainLog]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,train_loss,val_loss,lr")?;
    for l in log {
        let val = l.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let train = if l.train_loss.is_finite() { l.train_loss.to_string() } else { String::new() };
        writeln!(w, "{},{},{},{}", l.step, train, val, l.lr)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_cmd(cfg: &Config, a: &TrainArgs) -> Result<Value> {
    let ds = Dataset::open(&a.dataset)?;
    let data = ds.train_data()?;
    let spectral = ds.manifest.spectral;
    let ctx = SpectralContext::new(spectral)?;
    let mut tc = cfg.train_config();
    let mut arch = cfg.train.architecture.clone();
    if let Some(t) = a.topology {
        arch.topology = t;
    }
    if let Some(s) = a.steps {
        tc.max_steps = s;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    if let Some(lr) = a.lr {
        tc.adam.lr = lr;
    }
    if let Some(e) = a.eval_every {
        tc.eval_every = e;
    }
    if let Some(p) = a.patience {
        tc.patience = p;
    }
    if a.max_seconds.is_some() {
        tc.max_seconds = a.max_seconds;
    }
    let split = split_by_shape(&data, tc.val_fraction, tc.seed);
    let model = Predictor::new(arch, ds.manifest.ranges, spectral, tc.seed)?;
    let out = match train(model, &data, &split, &ctx, &tc) {
        Ok(o) => o,
        Err(f) => {
            let rescue = a.out.with_extension("failed.ckpt");
            save_checkpoint(&f.last_good, &rescue)?;
            log::error!("saved last good weights to {}", rescue.display());
            return Err(f.into());
        }
    };
    save_checkpoint(&out.model, &a.out)?;
    if let Some(h) = &a.history {
        write_train_log(h, &out.history)?;
    }
    Ok(json!({
        "topology": out.model.topology().to_string(),
        "train_samples": split.train.len(),
        "val_samples": split.val.len(),
        "baseline_val": out.baseline_val,
        "best_val": out.best_val,
        "steps": out.steps,
        "seconds": out.seconds,
        "checkpoint": a.out,
    }))
}

fn excitation(a: &RenderArgs, n: usize, sample_rate: u32) -> Result<AudioBuffer> {
    match &a.excitation {
        Some(p) => AudioBuffer::read_wav(p),
        None => Ok(AudioBuffer::impulse(n, sample_rate)),
    }
}

pub fn render_cmd(cfg: &Config, a: &RenderArgs) -> Result<Value> {
    let (audio, source) = if let Some(p) = &a.params {
        let params: FilterBankParams = read_json(p)?;
        params.validate()?;
        let x = excitation(a, cfg.spectral.n_samples, cfg.spectral.sample_rate)?;
        (render_recursive(&params, &x)?, "params")
    } else if let Some(p) = &a.sos {
        let sos: SosBank = read_json(p)?;
        let x = excitation(a, cfg.spectral.n_samples, cfg.spectral.sample_rate)?;
        (sos.render(&x)?, "sos")
    } else {
        let (Some(dir), Some(i)) = (&a.dataset, a.sample) else {
            return Err(Error::invalid("render needs --params, --sos, or --dataset with --sample"));
        };
        let ds = Dataset::open(dir)?;
        if i >= ds.manifest.samples.len() {
            return Err(Error::invalid(format!("sample {i} out of range (dataset has {})", ds.manifest.samples.len())));
        }
        let spectral = ds.manifest.spectral;
        let x = excitation(a, spectral.n_samples, spectral.sample_rate)?;
        if let Some(ck) = &a.checkpoint {
            let model = load_checkpoint(ck)?;
            let rec = &ds.manifest.samples[i];
            let emb = model.encode(&ds.occupancy(rec.shape)?);
            let params = model.predict(&emb, &ds.conditioning(i)?)?;
            (render_recursive(&params, &x)?, "predictor")
        } else {
            let rec = &ds.manifest.samples[i];
            let ir = render_ir(&ds.modal(rec.pair)?, &ds.gains(i)?, &spectral)?;
            (if a.excitation.is_some() { excite(&ir, &x)? } else { ir }, "oracle")
        }
    };
    audio.write_wav(&a.out)?;
    Ok(json!({ "source": source, "out": a.out, "samples": audio.len(), "sample_rate": audio.sample_rate, "peak": audio.peak() }))
}

fn split_indices(ds: &Dataset, cfg: &Config, choice: SplitChoice, limit: Option<usize>) -> Result<Vec<usize>> {
    let data = ds.train_data()?;
    let split = split_by_shape(&data, cfg.train.val_fraction, cfg.seed);
    let mut idx = match choice {
        SplitChoice::Val => split.val,
        SplitChoice::Train => split.train,
        SplitChoice::All => (0..data.samples.len()).collect(),
    };
    if let Some(l) = limit {
        idx.truncate(l);
    }
    if idx.is_empty() {
        return Err(Error::invalid("evaluation split is empty"));
    }
    Ok(idx)
}

/// Oracle impulse responses for the chosen samples, as stored in the dataset.
pub fn oracle_audio(ds: &Dataset, indices: &[usize]) -> Result<Vec<AudioBuffer>> {
    indices
        .iter()
        .map(|&i| {
            let rec = &ds.manifest.samples[i];
            render_ir(&ds.modal(rec.pair)?, &ds.gains(i)?, &ds.manifest.spectral)
        })
        .collect()
}

pub fn eval_predictor(ds: &Dataset, model: &Predictor, indices: &[usize]) -> Result<EvalReport> {
    let n = ds.manifest.spectral.n_samples;
    let imp = AudioBuffer::impulse(n, ds.manifest.spectral.sample_rate);
    let oracle = oracle_audio(ds, indices)?;
    let mut per = Vec::with_capacity(indices.len());
    for (&i, o) in indices.iter().zip(&oracle) {
        let rec = &ds.manifest.samples[i];
        let emb = model.encode(&ds.occupancy(rec.shape)?);
        let params = model.predict(&emb, &ds.conditioning(i)?)?;
        per.push(eval_metrics(o, &render_recursive(&params, &imp)?)?);
    }
    EvalReport::from_samples(model.topology().to_string(), per)
}

/// Direct per-sample fitting with the configured budget as the model.
pub fn eval_fit(ds: &Dataset, topology: modalbank::Topology, cfg: &Config, indices: &[usize]) -> Result<EvalReport> {
    let ctx = SpectralContext::new(ds.manifest.spectral)?;
    let imp = AudioBuffer::impulse(ctx.cfg.n_samples, ctx.cfg.sample_rate);
    let oracle = oracle_audio(ds, indices)?;
    let mut per = Vec::with_capacity(indices.len());
    for (&i, o) in indices.iter().zip(&oracle) {
        let out = fit_mel(&ds.mel(i)?, topology, &ctx, &cfg.fit_budget())?;
        per.push(eval_metrics(o, &render_recursive(&out.params, &imp)?)?);
        info!("fit {topology} sample {i}: loss {:.4e}", out.best_loss);
    }
    EvalReport::from_samples(format!("{topology} (fit)"), per)
}

pub fn eval_cmd(cfg: &Config, a: &EvalArgs) -> Result<Value> {
    if a.checkpoint.is_empty() && a.fit.is_empty() {
        return Err(Error::invalid("eval needs at least one --checkpoint or --fit topology"));
    }
    let ds = Dataset::open(&a.dataset)?;
    let idx = split_indices(&ds, cfg, a.split, a.limit)?;
    let mut reports = Vec::new();
    for ck in &a.checkpoint {
        let model = load_checkpoint(ck)?;
        reports.push(eval_predictor(&ds, &model, &idx)?);
    }
    for &t in &a.fit {
        reports.push(eval_fit(&ds, t, cfg, &idx)?);
    }
    Ok(json!({ "samples": idx, "reports": reports }))
}

pub fn bench_cmd(cfg: &Config, a: &BenchArgs) -> Result<Value> {
    let mut bc = cfg.bench_config();
    if let Some(v) = &a.vertices {
        bc.vertices = v.clone();
    }
    if let Some(r) = a.repetitions {
        bc.repetitions = r;
    }
    if let Some(p) = a.positions {
        bc.positions = p;
    }
    let model = match &a.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => Predictor::new(cfg.train.architecture.clone(), cfg.ranges, cfg.spectral, cfg.seed)?,
    };
    Ok(serde_json::to_value(run_bench(&model, &bc)?)?)
}

/// One-line human-readable summary of a command result.
pub fn summarize(v: &Value) -> String {
    match v {
        Value::Object(m) => m
            .iter()
            .filter(|(_, v)| !v.is_array() && !v.is_object())
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
        other => other.to_string(),
    }
}
