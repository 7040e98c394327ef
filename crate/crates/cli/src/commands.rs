use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tmkd::config::RunConfig;
use tmkd::distill::gradcheck;
use tmkd::models::{Checkpoint, MlpNet, Role};
use tmkd::textguide::EmbeddingTable;
use tmkd::train::{
    class_logits_csv, distill, eval_top_k, evaluate, generate, pretrain_teacher, save_dataset, PreparedData,
    PretrainRow, METRICS_HEADER,
};
use tmkd::viewgen::{build_views, ppm, sidecar, ViewKind};

use crate::error::CliError;
use crate::{Ablation, Command, ConfigArgs, RunArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Preprocess {
            input,
            output,
            alpha_e,
            alpha_hf,
            canny_low,
            canny_high,
            sigma,
            kernel,
            config,
        } => {
            let mut cfg = load_config(&config)?;
            let v = &mut cfg.views;
            v.alpha_e = alpha_e.unwrap_or(v.alpha_e);
            v.alpha_hf = alpha_hf.unwrap_or(v.alpha_hf);
            v.canny_low = canny_low.unwrap_or(v.canny_low);
            v.canny_high = canny_high.unwrap_or(v.canny_high);
            v.gaussian_sigma = sigma.unwrap_or(v.gaussian_sigma);
            v.gaussian_kernel = kernel.unwrap_or(v.gaussian_kernel);
            preprocess(&input, &output, &cfg)
        }
        Command::Synth { out, config } => synth(&out, &load_config(&config)?),
        Command::Pretrain { run } => pretrain(&run),
        Command::Distill {
            run,
            embeddings,
            teacher,
            ablation,
        } => distill_cmd(&run, embeddings, teacher, &ablation),
        Command::Eval {
            checkpoint,
            data,
            config,
        } => {
            let mut cfg = load_config(&config)?;
            if data.is_some() {
                cfg.data_dir = data;
            }
            eval(&checkpoint, &cfg)
        }
        Command::Gradcheck { seed, trials, tol } => run_gradcheck(seed, trials, tol),
        Command::ExportRun { run, runs_dir, out } => {
            let src = runs_dir.join(&run);
            let out = out.unwrap_or_else(|| src.join("export"));
            export_run(&src, &out)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o).map_err(|e| CliError::Input(format!("--set {o}: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved"), cfg.resolved())?;
    Ok(())
}

fn run_dir(args: &RunArgs) -> Result<PathBuf> {
    let name = &args.run_name;
    if name.is_empty() || name == "." || name == ".." || name.contains(['/', '\\']) {
        return Err(CliError::Input(format!("run name `{name}` must be a plain directory name")));
    }
    Ok(args.runs_dir.join(name))
}

/// Derived outputs of a previous `preprocess` into the same directory are not inputs.
fn is_view_output(name: &str) -> bool {
    [".rgb.ppm", ".edge.ppm", ".hf.ppm"].iter().any(|s| name.ends_with(s))
}

fn preprocess(input: &Path, output: &Path, cfg: &RunConfig) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x == "ppm")
                && !p.file_name().and_then(|n| n.to_str()).is_some_and(is_view_output)
        })
        .collect();
    files.sort();
    write_resolved(output, cfg)?;
    let mut failures = Vec::new();
    for path in &files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let result = ppm::read_ppm(path).and_then(|img| {
            let views = build_views(&img, &cfg.views)?;
            for kind in ViewKind::ALL {
                ppm::write_ppm(&views.get(kind).to_rgb8(), output.join(format!("{stem}.{}.ppm", kind.as_str())))?;
            }
            sidecar::write_views(&views, output.join(format!("{stem}.views.f64")))?;
            Ok((img.height(), img.width()))
        });
        match result {
            Ok((h, w)) => println!("{}: {h}x{w}, 4 outputs", path.display()),
            Err(e) => {
                println!("{}: error: {e}", path.display());
                failures.push(format!("{}: {e}", path.display()));
            }
        }
    }
    println!("{} files processed", files.len() - failures.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{} files failed:\n  {}", failures.len(), failures.join("\n  "))))
    }
}

fn synth(out: &Path, cfg: &RunConfig) -> Result<()> {
    let ds = generate(&cfg.synth)?;
    save_dataset(&ds, out)?;
    write_resolved(out, cfg)?;
    println!("wrote {} images of {} classes to {}", ds.samples.len(), ds.classes.len(), out.display());
    Ok(())
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&args.config)?;
    if args.data.is_some() {
        cfg.data_dir = args.data.clone();
    }
    Ok(cfg)
}

fn pretrain_csv(rows: &[PretrainRow]) -> String {
    let mut out = String::from("epoch,loss,train_top1,test_top1\n");
    for r in rows {
        writeln!(out, "{},{:.6},{:.6},{:.6}", r.epoch, r.loss, r.train_top1, r.test_top1).unwrap();
    }
    out
}

fn train_teacher(cfg: &RunConfig, data: &PreparedData, dir: &Path) -> Result<MlpNet> {
    let mut teacher = cfg.init_teacher(data.d_in, data.n_classes());
    let rows = pretrain_teacher(&mut teacher, data, &cfg.pretrain_config())?;
    fs::write(dir.join("pretrain.csv"), pretrain_csv(&rows))?;
    Checkpoint::from_module(&teacher).save(dir.join("teacher.tmkc"))?;
    let last = rows.last().expect("at least one epoch");
    println!(
        "teacher: train_top1 {:.6} test_top1 {:.6} after {} epochs",
        last.train_top1,
        last.test_top1,
        rows.len()
    );
    Ok(teacher)
}

fn pretrain(args: &RunArgs) -> Result<()> {
    let cfg = run_config(args)?;
    let dir = run_dir(args)?;
    write_resolved(&dir, &cfg)?;
    let data = cfg.prepare_data()?;
    train_teacher(&cfg, &data, &dir)?;
    Ok(())
}

fn load_mlp(path: &Path) -> Result<MlpNet> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let depth = ckpt
        .tensors
        .keys()
        .filter(|k| k.starts_with("layers.") && k.ends_with(".weight"))
        .count();
    let role = if depth > 1 { Role::Teacher } else { Role::Student };
    Ok(ckpt.to_mlp(role)?)
}

fn distill_cmd(args: &RunArgs, embeddings: Option<PathBuf>, teacher: Option<PathBuf>, ab: &Ablation) -> Result<()> {
    let mut cfg = run_config(args)?;
    if embeddings.is_some() {
        cfg.embeddings = embeddings;
    }
    if teacher.is_some() {
        cfg.teacher_checkpoint = teacher;
    }
    let t = &mut cfg.train;
    t.use_edge_view &= !ab.no_edge;
    t.use_hf_view &= !ab.no_hf;
    t.use_feat_loss &= !ab.no_feat;
    t.use_crd_loss &= !ab.no_crd;
    t.use_ce |= ab.with_ce;
    let emb_path = cfg
        .embeddings
        .clone()
        .ok_or_else(|| CliError::Input("no embedding file: pass --embeddings or set `embeddings`".into()))?;
    let table = EmbeddingTable::load(&emb_path).map_err(|e| CliError::Input(format!("{}: {e}", emb_path.display())))?;
    let dir = run_dir(args)?;
    write_resolved(&dir, &cfg)?;
    let data = cfg.prepare_data()?;
    let missing = table.missing_keys(data.classes.iter().map(String::as_str));
    if !missing.is_empty() {
        return Err(CliError::Input(format!("missing embeddings: {}", missing.join(", "))));
    }
    let teacher = match &cfg.teacher_checkpoint {
        Some(p) => load_mlp(p)?,
        None => train_teacher(&cfg, &data, &dir)?,
    };
    let mut model = cfg.init_tmkd(data.d_in, data.n_classes(), teacher.feat_dim(), table.dim());
    println!("{}: {} epochs", cfg.run_kind(), cfg.train.epochs);
    let out = distill(
        &teacher,
        &mut model,
        &table,
        &data,
        &cfg.train_config(),
        &cfg.distill_config(),
        &cfg.run,
    )?;
    out.metrics.write(&dir)?;
    fs::write(dir.join("logits.csv"), class_logits_csv(&data.classes, &out.class_logits))?;
    Checkpoint::from_module(&out.best_student).save(dir.join("student.tmkc"))?;
    let last = out.metrics.last().expect("at least one epoch");
    println!(
        "final test_top1 {:.6}, best {:.6} at epoch {}; outputs in {}",
        last.test_top1,
        out.metrics.rows[out.best_epoch].test_top1,
        out.best_epoch,
        dir.display()
    );
    Ok(())
}

fn eval(checkpoint: &Path, cfg: &RunConfig) -> Result<()> {
    let net = load_mlp(checkpoint)?;
    let data = cfg.prepare_data()?;
    if net.d_in() != data.d_in || net.classes() != data.n_classes() {
        return Err(CliError::Input(format!(
            "checkpoint expects {} inputs and {} classes, data has {} and {}",
            net.d_in(),
            net.classes(),
            data.d_in,
            data.n_classes()
        )));
    }
    let k = eval_top_k(data.n_classes());
    for (name, idx) in [("train", &data.train), ("test", &data.test)] {
        let (_, z) = net.predict(&data.rows(ViewKind::Rgb, idx))?;
        let e = evaluate(z.data(), data.n_classes(), &data.labels_of(idx), k).map_err(CliError::from)?;
        println!(
            "{name}: top1 {:.6} top{k} {:.6} macro_recall {:.6}",
            e.top1, e.topk, e.macro_recall
        );
    }
    Ok(())
}

fn run_gradcheck(seed: u64, trials: usize, tol: f64) -> Result<()> {
    if trials == 0 {
        return Err(CliError::Input("--trials must be positive".into()));
    }
    let report = gradcheck::run(seed, trials)?;
    println!("gradcheck seed {seed}, {trials} trials, {} redraws near ReLU kinks", report.redraws);
    for t in &report.terms {
        println!(
            "{:<5} worst relative error {:.3e} at {} (trial {})",
            t.term, t.worst, t.param, t.trial
        );
    }
    let worst = report.worst();
    if report.passed(tol) {
        println!("PASS: all below {tol:e}");
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "gradient check failed: term {} parameter {} has relative error {:.3e} >= {tol:e}",
            worst.term, worst.param, worst.worst
        )))
    }
}

fn read_required(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn select_columns(rows: &[Vec<&str>], cols: &[usize]) -> String {
    let mut out = String::new();
    for r in rows {
        let picked: Vec<&str> = cols.iter().map(|&c| r[c]).collect();
        out.push_str(&picked.join(","));
        out.push('\n');
    }
    out
}

fn export_run(src: &Path, out: &Path) -> Result<()> {
    let metrics = read_required(&src.join("metrics.csv"))?;
    let logits = read_required(&src.join("logits.csv"))?;
    let rows: Vec<Vec<&str>> = metrics.lines().map(|l| l.split(',').collect()).collect();
    let width = METRICS_HEADER.split(',').count();
    if rows.first().map(|h| h.join(",")) != Some(METRICS_HEADER.to_string()) || rows.iter().any(|r| r.len() != width) {
        return Err(CliError::Input(format!("{}: not a metrics log", src.join("metrics.csv").display())));
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.csv"), &metrics)?;
    fs::write(out.join("logits.csv"), &logits)?;
    fs::write(out.join("weights.csv"), select_columns(&rows, &[0, 9, 10, 11]))?;
    fs::write(out.join("losses.csv"), select_columns(&rows, &[0, 1, 2, 3, 4]))?;
    fs::write(out.join("accuracy.csv"), select_columns(&rows, &[0, 5, 6, 7, 8]))?;
    println!("exported {} epochs to {}", rows.len() - 1, out.display());
    Ok(())
}
