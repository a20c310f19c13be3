use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use regimecast::drivers::{mjo_phase, spv_index, MjoSeries};
use regimecast::eval::{
    active_phase_confusion, aggregate_active_phase, mjo_composites, precursor_frequencies, select_opportunities,
    spv_composites, write_mjo_composites_csv, write_spv_composites_csv, SkillReport,
};
use regimecast::experiment::{
    prepare, pretrain_embeddings, run_member, run_model_ensemble, summarize_model, DriverInputs, Embeddings, MemberRun,
    Prepared,
};
use regimecast::gridstore::{read_grid, write_grid, write_series_csv};
use regimecast::models::{ForecastRecord, ModelKind, Probs, ProfileConfig, N_LEADS};
use regimecast::preprocess::{anomalies, extended_winter, regrid, rolling_mean};
use regimecast::regimes::{fit_eof, RegimeModel, RegimeSeries};
use regimecast::synth::generate;
use regimecast::training::{bayes_opt, build_windows, summarize, Split, WindowConfig};
use serde::Serialize;

use crate::config::{
    section, BoCommandConfig, ClusterConfig, EofConfig, IndicesConfig, ModelRunConfig, PrecursorConfig,
    PreprocessConfig, SynthConfig,
};
use crate::manifest::RunManifest;
use crate::{Cli, CliError, Command, GlobalArgs};

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input {} does not exist", path.display())))
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn manifest_for_dir(g: &GlobalArgs, dir: &Path) -> PathBuf {
    g.manifest.clone().unwrap_or_else(|| dir.join("manifest.json"))
}

fn manifest_for_file(g: &GlobalArgs, file: &Path) -> PathBuf {
    g.manifest.clone().unwrap_or_else(|| {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        file.with_file_name(name)
    })
}

pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let g = &cli.global;
    if g.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if let Some(p) = g.percentile {
        if !(0.0..=100.0).contains(&p) {
            return Err(CliError::Usage(format!("--percentile {p} outside [0, 100]")));
        }
    }
    if let Some(path) = &g.config {
        require(path)?;
    }
    let cfg = g.config.as_deref();
    match &cli.command {
        Command::Synth { out_dir, winters } => synth(g, cfg, out_dir, *winters),
        Command::Preprocess { input, output } => preprocess_cmd(g, cfg, input, output),
        Command::Eof { anomalies, output } => eof(g, cfg, anomalies, output),
        Command::Cluster { anomalies, references, out_dir } => cluster(g, cfg, anomalies, references, out_dir),
        Command::Indices { u10, rmm, out_dir } => indices(g, cfg, u10, rmm, out_dir),
        Command::Windows { regimes, output } => windows(g, cfg, regimes, output),
        Command::Train { regimes, drivers, out_dir, model } => train(g, cfg, regimes, drivers, out_dir, *model),
        Command::Ensemble { regimes, drivers, out_dir, models, members } => {
            ensemble(g, cfg, regimes, drivers, out_dir, models, *members)
        }
        Command::Bo { regimes, drivers, output, model } => bo(g, cfg, regimes, drivers, output, *model),
        Command::Evaluate { records, output } => evaluate(g, records, output),
        Command::Precursors { records, regimes, drivers, out_dir } => {
            precursors(g, cfg, records, regimes, drivers, out_dir)
        }
        Command::Report { out_dir, inputs } => report(g, out_dir, inputs),
    }
}

fn synth(g: &GlobalArgs, cfg: Option<&Path>, out_dir: &Path, winters: Option<usize>) -> Result<PathBuf, CliError> {
    let mut c: SynthConfig = section(cfg, "synth")?;
    if let Some(s) = g.seed {
        c.world.seed = s;
    }
    if let Some(w) = winters {
        c.winters = w;
    }
    let mut m = RunManifest::start("synth", &c, vec![c.world.seed])?;
    let world = generate(&c.world, c.winters)?;
    create_dir(out_dir)?;
    for path in world.write(out_dir)? {
        m.output(&path)?;
    }
    let audit = out_dir.join("blocks.json");
    write_json(&audit, &world.blocks)?;
    m.output(&audit)?;
    m.finish(&manifest_for_dir(g, out_dir))
}

fn preprocess_cmd(g: &GlobalArgs, cfg: Option<&Path>, input: &Path, output: &Path) -> Result<PathBuf, CliError> {
    require(input)?;
    let c: PreprocessConfig = section(cfg, "preprocess")?;
    let mut m = RunManifest::start("preprocess", &c, vec![])?;
    m.input(input)?;
    let mut field = read_grid(input)?;
    if let Some(grid) = &c.grid {
        field = regrid(&field, &grid.lats, &grid.lons)?;
    }
    let mut out = anomalies(&rolling_mean(&field, c.rolling_days)?, &c.climatology)?;
    if c.extended_winter {
        out = extended_winter(&out)?;
    }
    write_grid(output, &out)?;
    m.output(output)?;
    m.finish(&manifest_for_file(g, output))
}

fn eof(g: &GlobalArgs, cfg: Option<&Path>, input: &Path, output: &Path) -> Result<PathBuf, CliError> {
    require(input)?;
    let c: EofConfig = section(cfg, "eof")?;
    let mut m = RunManifest::start("eof", &c, vec![])?;
    m.input(input)?;
    let basis = fit_eof(&read_grid(input)?, c.n_eof, c.weighting)?;
    write_json(output, &basis)?;
    m.output(output)?;
    m.extra.insert(
        "explained_variance".into(),
        serde_json::json!(basis.explained_variance_ratio.iter().sum::<f64>()),
    );
    m.finish(&manifest_for_file(g, output))
}

fn cluster(
    g: &GlobalArgs,
    cfg: Option<&Path>,
    input: &Path,
    references: &Path,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    require(input)?;
    require(references)?;
    let mut c: ClusterConfig = section(cfg, "cluster")?;
    if let Some(s) = g.seed {
        c.kmeans.seed = s;
    }
    let mut m = RunManifest::start("cluster", &c, vec![c.kmeans.seed])?;
    m.input(input)?;
    m.input(references)?;
    let field = read_grid(input)?;
    let refs = read_grid(references)?;
    let maps: Vec<Vec<f64>> = (0..refs.ntime()).map(|t| refs.map(t).iter().map(|&v| v as f64).collect()).collect();
    let (model, series) = RegimeModel::fit(&field, c.eof.n_eof, c.eof.weighting, &c.kmeans, &maps)?;
    create_dir(out_dir)?;
    let model_path = out_dir.join("regime_model.bin");
    let series_path = out_dir.join("regimes.csv");
    model.save(&model_path)?;
    series.write_csv(&series_path)?;
    m.output(&model_path)?;
    m.output(&series_path)?;
    m.extra.insert("frequencies".into(), serde_json::json!(series.frequencies()));
    m.finish(&manifest_for_dir(g, out_dir))
}

fn indices(g: &GlobalArgs, cfg: Option<&Path>, u10: &Path, rmm: &Path, out_dir: &Path) -> Result<PathBuf, CliError> {
    require(u10)?;
    require(rmm)?;
    let c: IndicesConfig = section(cfg, "indices")?;
    let mut m = RunManifest::start("indices", &c, vec![])?;
    m.input(u10)?;
    m.input(rmm)?;
    let spv = spv_index(&rolling_mean(&read_grid(u10)?, c.rolling_days)?)?;
    let (r1, r2) = MjoSeries::read_csv(rmm, c.mjo_threshold)?.components()?;
    let mjo = MjoSeries::new(mjo_phase(&r1, &r2, c.rolling_days, c.mjo_threshold)?)?;
    create_dir(out_dir)?;
    let spv_path = out_dir.join("spv.csv");
    let mjo_path = out_dir.join("mjo.csv");
    write_series_csv(&spv_path, &spv)?;
    mjo.write_csv(&mjo_path)?;
    m.output(&spv_path)?;
    m.output(&mjo_path)?;
    m.finish(&manifest_for_dir(g, out_dir))
}

fn window_config(g: &GlobalArgs, mut w: WindowConfig) -> WindowConfig {
    if let Some(s) = g.stride_days {
        w.stride_days = s;
    }
    w
}

fn windows(g: &GlobalArgs, cfg: Option<&Path>, regimes: &Path, output: &Path) -> Result<PathBuf, CliError> {
    require(regimes)?;
    let c = window_config(g, section(cfg, "windows")?);
    let mut m = RunManifest::start("windows", &c, vec![])?;
    m.input(regimes)?;
    let samples = build_windows(&RegimeSeries::read_csv(regimes)?, &c, |_| true)?;
    let mut counts = BTreeMap::new();
    for split in [Split::Train, Split::Validation, Split::Test] {
        let key = serde_json::to_value(split).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        counts.insert(key, samples.iter().filter(|s| s.split == split).count());
    }
    write_json(output, &serde_json::json!({ "counts": counts, "samples": samples }))?;
    m.output(output)?;
    m.finish(&manifest_for_file(g, output))
}

struct Loaded {
    run: ModelRunConfig,
    profile: ProfileConfig,
    prepared: Prepared,
}

fn load_prepared(
    g: &GlobalArgs,
    cfg: Option<&Path>,
    regimes: &Path,
    drivers: &Path,
    m_inputs: &mut Vec<PathBuf>,
) -> Result<Loaded, CliError> {
    let mut run: ModelRunConfig = section(cfg, "model")?;
    if let Some(s) = g.seed {
        run.seed = s;
    }
    run.prepare.window = window_config(g, run.prepare.window.clone());
    let paths = [regimes.to_path_buf(), drivers.join("u10.grd"), drivers.join("olr.grd"), drivers.join("rmm.csv")];
    for p in &paths {
        require(p)?;
    }
    m_inputs.extend(paths.iter().cloned());
    let series = RegimeSeries::read_csv(regimes)?;
    let (rmm1, rmm2) = MjoSeries::read_csv(&paths[3], run.prepare.mjo_threshold)?.components()?;
    let inputs = DriverInputs { u10: read_grid(&paths[1])?, olr: read_grid(&paths[2])?, rmm1, rmm2 };
    let prepared = prepare(&series, &inputs, &run.prepare)?;
    let profile = run.profile(g.profile);
    Ok(Loaded { run, profile, prepared })
}

fn needs_embeddings(models: &[ModelKind]) -> bool {
    models.contains(&ModelKind::VitLstm)
}

fn save_embeddings(dir: &Path, emb: &Embeddings, m: &mut RunManifest) -> Result<(), CliError> {
    for (name, store) in [("encoder_u10.ckpt", &emb.u10_encoder), ("encoder_olr.ckpt", &emb.olr_encoder)] {
        let path = dir.join(name);
        store.save(&path)?;
        m.output(&path)?;
    }
    let losses = dir.join("mae_losses.json");
    write_json(&losses, &serde_json::json!({ "u10": emb.u10_losses, "olr": emb.olr_losses }))?;
    m.output(&losses)
}

fn history_lines(runs: &[&MemberRun]) -> String {
    let mut out = String::new();
    for r in runs {
        if let Some(rep) = &r.train_report {
            for e in &rep.history {
                let line = serde_json::json!({
                    "member": r.member, "seed": r.seed, "epoch": e.epoch, "phase": e.phase,
                    "train_loss": e.train_loss, "val_score": e.val_score,
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
    }
    out
}

fn write_member_outputs(dir: &Path, runs: &[&MemberRun], m: &mut RunManifest) -> Result<(), CliError> {
    for r in runs {
        if let Some(params) = &r.params {
            let path = dir.join(format!("member_{:03}.ckpt", r.member));
            params.save(&path)?;
            m.output(&path)?;
        }
    }
    let records: Vec<&ForecastRecord> = runs.iter().flat_map(|r| &r.records).collect();
    let rec_path = dir.join("records.json");
    write_json(&rec_path, &records)?;
    m.output(&rec_path)?;
    let history = history_lines(runs);
    if !history.is_empty() {
        let path = dir.join("history.jsonl");
        fs::write(&path, history).map_err(|e| CliError::output(&path, e))?;
        m.output(&path)?;
    }
    Ok(())
}

fn train(
    g: &GlobalArgs,
    cfg: Option<&Path>,
    regimes: &Path,
    drivers: &Path,
    out_dir: &Path,
    model: ModelKind,
) -> Result<PathBuf, CliError> {
    let mut inputs = Vec::new();
    let l = load_prepared(g, cfg, regimes, drivers, &mut inputs)?;
    let mut m = RunManifest::start("train", &(&l.run, &l.profile, model), vec![l.run.seed])?;
    for p in &inputs {
        m.input(p)?;
    }
    create_dir(out_dir)?;
    let emb = if needs_embeddings(&[model]) {
        let e = pretrain_embeddings(&l.prepared, &l.profile, l.run.seed)?;
        save_embeddings(out_dir, &e, &mut m)?;
        Some(e)
    } else {
        None
    };
    let run = run_member(model, &l.prepared, emb.as_ref(), &l.profile, 0, l.run.seed)?;
    write_member_outputs(out_dir, &[&run], &mut m)?;
    let report_path = out_dir.join("report.json");
    write_json(&report_path, &run.report)?;
    m.output(&report_path)?;
    m.finish(&manifest_for_dir(g, out_dir))
}

fn ensemble(
    g: &GlobalArgs,
    cfg: Option<&Path>,
    regimes: &Path,
    drivers: &Path,
    out_dir: &Path,
    models: &[ModelKind],
    members: Option<usize>,
) -> Result<PathBuf, CliError> {
    let mut inputs = Vec::new();
    let mut l = load_prepared(g, cfg, regimes, drivers, &mut inputs)?;
    if let Some(n) = members {
        l.profile.members = n;
    }
    let models = if models.is_empty() { l.run.models.clone() } else { models.to_vec() };
    let seeds: Vec<u64> = (0..l.profile.members).map(|k| l.run.seed + k as u64).collect();
    let mut m = RunManifest::start("ensemble", &(&l.run, &l.profile, &models), seeds)?;
    for p in &inputs {
        m.input(p)?;
    }
    create_dir(out_dir)?;
    let emb = if needs_embeddings(&models) {
        let e = pretrain_embeddings(&l.prepared, &l.profile, l.run.seed)?;
        save_embeddings(out_dir, &e, &mut m)?;
        Some(e)
    } else {
        None
    };
    let mut summaries = Vec::new();
    for &kind in &models {
        // Persistence and climatology do not depend on the seed.
        let n = if matches!(kind, ModelKind::Persistence | ModelKind::Climatology) { 1 } else { l.profile.members };
        eprintln!("{}: {n} member(s)", kind.name());
        let out = run_model_ensemble(kind, &l.prepared, emb.as_ref(), &l.profile, n, l.run.seed, g.jobs)?;
        let dir = out_dir.join(kind.name());
        create_dir(&dir)?;
        let ok: Vec<&MemberRun> = out.iter().filter_map(|o| o.result.as_ref().ok()).collect();
        write_member_outputs(&dir, &ok, &mut m)?;
        let summary = summarize_model(kind, &out).map_err(|e| {
            let failures: Vec<&String> = out.iter().filter_map(|o| o.result.as_ref().err()).collect();
            CliError::Numeric(format!("{}: {e}; member errors: {failures:?}", kind.name()))
        })?;
        let path = dir.join("summary.json");
        write_json(&path, &summary)?;
        m.output(&path)?;
        summaries.push(summary);
    }
    let path = out_dir.join("ensemble.json");
    write_json(&path, &summaries)?;
    m.output(&path)?;
    m.finish(&manifest_for_dir(g, out_dir))
}

fn bo(
    g: &GlobalArgs,
    cfg: Option<&Path>,
    regimes: &Path,
    drivers: &Path,
    output: &Path,
    model: ModelKind,
) -> Result<PathBuf, CliError> {
    if !matches!(model, ModelKind::Lstm | ModelKind::IndexLstm | ModelKind::VitLstm) {
        return Err(CliError::Usage(format!("{} has no tunable training settings", model.name())));
    }
    let mut inputs = Vec::new();
    let l = load_prepared(g, cfg, regimes, drivers, &mut inputs)?;
    let mut c: BoCommandConfig = section(cfg, "bo")?;
    c.bo.seed = l.run.seed;
    let mut m = RunManifest::start("bo", &(&l.run, &l.profile, &c, model), vec![l.run.seed])?;
    for p in &inputs {
        m.input(p)?;
    }
    let emb = if needs_embeddings(&[model]) { Some(pretrain_embeddings(&l.prepared, &l.profile, l.run.seed)?) } else { None };
    let result = bayes_opt(&[c.log10_lr, c.dropout], &c.bo, |x| {
        let mut prof = l.profile.clone();
        prof.train.lr = 10f64.powf(x[0]);
        prof.dropout = x[1];
        let run = run_member(model, &l.prepared, emb.as_ref(), &prof, 0, l.run.seed)?;
        let score = run.train_report.map_or(f64::NAN, |r| r.final_val_score);
        eprintln!("lr {:.2e} dropout {:.3}: validation score {score:.4}", prof.train.lr, prof.dropout);
        Ok(score)
    })?;
    let doc = serde_json::json!({
        "model": model.name(),
        "parameters": ["log10_lr", "dropout"],
        "best": { "lr": 10f64.powf(result.best_x[0]), "dropout": result.best_x[1], "val_score": result.best_y },
        "result": result,
    });
    write_json(output, &doc)?;
    m.output(output)?;
    m.finish(&manifest_for_file(g, output))
}

fn by_member(records: &[ForecastRecord]) -> BTreeMap<u64, Vec<ForecastRecord>> {
    let mut out: BTreeMap<u64, Vec<ForecastRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.member).or_default().push(r.clone());
    }
    out
}

fn evaluate(g: &GlobalArgs, records: &Path, output: &Path) -> Result<PathBuf, CliError> {
    require(records)?;
    let mut m = RunManifest::start("evaluate", &serde_json::json!({}), vec![])?;
    m.input(records)?;
    let recs: Vec<ForecastRecord> = read_json(records)?;
    if recs.is_empty() {
        return Err(CliError::Validation("no forecast records".into()));
    }
    let mut reports = Vec::new();
    for (member, rs) in by_member(&recs) {
        let probs: Vec<Probs> = rs.iter().map(|r| r.probs).collect();
        let targets: Vec<[u8; N_LEADS]> = rs.iter().map(|r| r.targets).collect();
        reports.push(SkillReport::from_predictions(&format!("member_{member}"), &probs, &targets)?);
    }
    let s = summarize(&reports.iter().map(SkillReport::balanced_accuracy).collect::<Vec<_>>(), 0)?;
    let doc = serde_json::json!({
        "members": reports.len(),
        "balanced_accuracy_mean": s.mean,
        "balanced_accuracy_std": s.std,
        "reports": reports,
    });
    write_json(output, &doc)?;
    m.output(output)?;
    m.finish(&manifest_for_file(g, output))
}

fn precursors(
    g: &GlobalArgs,
    cfg: Option<&Path>,
    records: &Path,
    regimes: &Path,
    drivers: &Path,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    require(records)?;
    let mut inputs = vec![records.to_path_buf()];
    let l = load_prepared(g, cfg, regimes, drivers, &mut inputs)?;
    let mut c: PrecursorConfig = section(cfg, "precursors")?;
    if let Some(p) = g.percentile {
        c.percentile = p;
    }
    let mut m = RunManifest::start("precursors", &(&l.run.prepare, &c), vec![])?;
    for p in &inputs {
        m.input(p)?;
    }
    let recs: Vec<ForecastRecord> = read_json(records)?;
    let opps = select_opportunities(&recs, c.percentile)?;
    let table = precursor_frequencies(&recs, &opps)?;
    let spv = spv_composites(&recs, &opps, &l.prepared.spv_raw, &l.prepared.spv_train_values)?;
    let mjo = mjo_composites(&recs, &opps, &l.prepared.mjo)?;
    let tables = by_member(&recs)
        .values()
        .map(|rs| active_phase_confusion(rs, &l.prepared.mjo))
        .collect::<regimecast::Result<Vec<_>>>()?;
    let active = aggregate_active_phase(&tables)?;
    create_dir(out_dir)?;
    let outputs = [
        ("opportunities.json", serde_json::to_value(&opps)),
        ("precursors.json", serde_json::to_value(&table)),
        ("spv_composites.json", serde_json::to_value(&spv)),
        ("mjo_composites.json", serde_json::to_value(&mjo)),
        ("active_phase.json", serde_json::to_value(&active)),
    ];
    for (name, value) in outputs {
        let path = out_dir.join(name);
        write_json(&path, &value.map_err(|e| CliError::Validation(e.to_string()))?)?;
        m.output(&path)?;
    }
    let spv_csv = out_dir.join("spv_composites.csv");
    let mjo_csv = out_dir.join("mjo_composites.csv");
    write_spv_composites_csv(&spv_csv, &spv)?;
    write_mjo_composites_csv(&mjo_csv, &mjo)?;
    m.output(&spv_csv)?;
    m.output(&mjo_csv)?;
    m.finish(&manifest_for_dir(g, out_dir))
}

/// Rows `model, lead_week, mean, std` from any model summaries in `doc`.
fn skill_rows(doc: &serde_json::Value, rows: &mut Vec<(String, usize, f64, f64)>) {
    match doc {
        serde_json::Value::Array(items) => items.iter().for_each(|d| skill_rows(d, rows)),
        serde_json::Value::Object(o) => {
            let mean = o.get("balanced_accuracy_mean").and_then(|v| v.as_array());
            let std = o.get("balanced_accuracy_std").and_then(|v| v.as_array());
            if let (Some(mean), Some(std)) = (mean, std) {
                let model = o.get("model").and_then(|v| v.as_str()).unwrap_or("records").to_string();
                for (i, (a, b)) in mean.iter().zip(std).enumerate() {
                    rows.push((model.clone(), i + 1, a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN)));
                }
            }
        }
        _ => {}
    }
}

fn report(g: &GlobalArgs, out_dir: &Path, inputs: &[PathBuf]) -> Result<PathBuf, CliError> {
    let mut m = RunManifest::start("report", &serde_json::json!({ "inputs": inputs }), vec![])?;
    create_dir(out_dir)?;
    let mut merged = serde_json::Map::new();
    let mut rows = Vec::new();
    for path in inputs {
        require(path)?;
        m.input(path)?;
        let name = path.display().to_string();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let doc: serde_json::Value = read_json(path)?;
                skill_rows(&doc, &mut rows);
                merged.insert(name, doc);
            }
            Some("csv") => {
                let file = path.file_name().unwrap_or_default();
                let dest = out_dir.join(file);
                if dest.exists() {
                    return Err(CliError::Usage(format!("two inputs named {}", file.to_string_lossy())));
                }
                fs::copy(path, &dest).map_err(|e| CliError::output(&dest, e))?;
                m.output(&dest)?;
            }
            _ => return Err(CliError::Usage(format!("{name}: expected a .json or .csv input"))),
        }
    }
    let report_path = out_dir.join("report.json");
    write_json(&report_path, &merged)?;
    m.output(&report_path)?;
    let csv_path = out_dir.join("skill.csv");
    let mut f = fs::File::create(&csv_path).map_err(|e| CliError::output(&csv_path, e))?;
    let mut text = String::from("model,lead_week,balanced_accuracy_mean,balanced_accuracy_std\n");
    for (model, week, mean, std) in rows {
        text.push_str(&format!("{model},{week},{mean:?},{std:?}\n"));
    }
    f.write_all(text.as_bytes()).map_err(|e| CliError::output(&csv_path, e))?;
    m.output(&csv_path)?;
    m.finish(&manifest_for_dir(g, out_dir))
}
