use std::fmt::Write as _;
use std::path::Path;

use dtsnn::data::{
    load_checkpoint, parse_config, save_checkpoint, Checkpoint, Dataset, ExperimentConfig, Split,
};
use dtsnn::exit::{
    record_trajectories, replay_policy, static_point, threshold_sweep, ExitPolicy, PolicySummary, Trajectory,
};
use dtsnn::imc::{apply_device_variation, CostModel, DatasetCost};
use dtsnn::snn::Model;
use dtsnn::training::{accuracy_per_timestep, train as run_training, LossMode, TrainConfig, TrainingLog};
use dtsnn::{Error, Result};

use crate::output::OutDir;
use crate::Common;

macro_rules! say {
    ($c:expr, $($arg:tt)*) => {
        if !$c.quiet {
            eprintln!($($arg)*);
        }
    };
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn load_split(cfg: &ExperimentConfig, split: Split, model: &Model) -> Result<Dataset> {
    cfg.data.load(split, model.spec(), Path::new("."))
}

fn fmt_row(cells: &[String]) -> String {
    let mut s = cells.join(",");
    s.push('\n');
    s
}

fn t_columns(prefix: &str, t_max: usize) -> Vec<String> {
    (1..=t_max).map(|t| format!("{prefix}{t}")).collect()
}

fn train_one(
    c: &Common,
    cfg: &ExperimentConfig,
    tc: &TrainConfig,
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
) -> Result<(Model, TrainingLog)> {
    let spec = cfg.model.network()?;
    let mut model = Model::init(spec, tc.seed)?;
    let log = run_training(&mut model, train_set, eval_set, tc, |r| {
        say!(
            c,
            "epoch {:>3}  lr {:.4}  loss {:.4}  train acc {:.4}  eval acc {:?}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.train_acc,
            r.eval_acc
        )
    })?;
    Ok((model, log))
}

pub fn train(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let spec = cfg.model.network()?;
    let probe = Model::zeros(spec)?;
    let train_set = load_split(&cfg, Split::Train, &probe)?;
    let test_set = load_split(&cfg, Split::Test, &probe)?;
    let mut out = OutDir::create(&c.out)?;
    say!(c, "training on {} samples, evaluating on {}", train_set.len(), test_set.len());
    let (model, log) = train_one(c, &cfg, &cfg.train, &train_set, Some(&test_set))?;
    let ckpt = Checkpoint {
        model,
        train: Some(cfg.train.clone()),
        seed: cfg.train.seed,
    };
    save_checkpoint(&out.path("model.ckpt"), &ckpt)?;
    out.record("model.ckpt");
    out.write("train_log.csv", &log.to_csv())?;
    if let Some(last) = log.records.last() {
        say!(c, "final eval accuracy per timestep: {:?}", last.eval_acc);
    }
    out.finish("train", &cfg)
}

struct Loaded {
    cfg: ExperimentConfig,
    model: Model,
    test: Dataset,
    cost: CostModel,
}

fn load_for_eval(c: &Common, checkpoint: &Path) -> Result<Loaded> {
    let cfg = load_config(c)?;
    let model = load_checkpoint(checkpoint)?.model;
    let test = load_split(&cfg, Split::Test, &model)?;
    let cost = CostModel::new(model.spec(), cfg.hardware.clone())?;
    Ok(Loaded { cfg, model, test, cost })
}

fn dynamic_cost(summary: &PolicySummary, cost: &CostModel) -> Result<DatasetCost> {
    dtsnn::exit::policy_cost(summary, cost)
}

pub fn eval(c: &Common, checkpoint: &Path, theta: Option<f64>) -> Result<()> {
    let l = load_for_eval(c, checkpoint)?;
    let t_max = l.model.spec().t_max;
    let policy = ExitPolicy::new(theta.unwrap_or(l.cfg.exit.theta), t_max)?;
    let mut out = OutDir::create(&c.out)?;
    say!(c, "evaluating {} samples at T = {t_max}, theta = {}", l.test.len(), policy.theta);
    let trajectories = record_trajectories(&l.model, &l.test, t_max)?;
    let (static_acc, static_cost) = static_point(&trajectories, l.test.labels(), t_max, &l.cost)?;
    let dt = dtsnn::exit::evaluate_policy(&l.model, &l.test, &policy)?;
    let dt_cost = dynamic_cost(&dt, &l.cost)?;
    let norm = dt_cost.normalized(&static_cost);

    let mut header = vec!["method", "theta", "timesteps", "accuracy", "mean_t_hat"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(t_columns("count_t", t_max));
    header.extend(["energy_ratio", "latency_ratio", "edp_ratio"].map(String::from));
    let mut csv = fmt_row(&header);
    let mut static_row = vec![
        "static".into(),
        String::new(),
        t_max.to_string(),
        format!("{static_acc:.6}"),
        format!("{t_max}"),
    ];
    static_row.extend((1..=t_max).map(|t| if t == t_max { l.test.len().to_string() } else { "0".into() }));
    static_row.extend(["1.000000", "1.000000", "1.000000"].map(String::from));
    csv += &fmt_row(&static_row);
    let mut dt_row = vec![
        "dynamic".into(),
        policy.theta.to_string(),
        t_max.to_string(),
        format!("{:.6}", dt.accuracy),
        format!("{:.6}", dt.mean_t_hat),
    ];
    dt_row.extend(dt.histogram.iter().map(|h| h.to_string()));
    dt_row.extend([norm.energy, norm.latency, norm.edp].map(|v| format!("{v:.6}")));
    csv += &fmt_row(&dt_row);
    out.write("eval.csv", &csv)?;
    out.write("traces.csv", &dt.traces_csv(l.test.labels()))?;
    say!(
        c,
        "static: acc {static_acc:.4}; dynamic: acc {:.4}, mean T^ {:.3}, energy {:.3}x, EDP {:.3}x",
        dt.accuracy,
        dt.mean_t_hat,
        norm.energy,
        norm.edp
    );
    out.finish("eval", &l.cfg)
}

pub fn sweep(c: &Common, checkpoint: &Path, grid: Option<Vec<f64>>) -> Result<()> {
    let mut l = load_for_eval(c, checkpoint)?;
    if let Some(g) = grid {
        l.cfg.exit.theta_grid = g;
    }
    l.cfg.exit.validate()?;
    let t_max = l.model.spec().t_max;
    let labels = l.test.labels();
    let mut out = OutDir::create(&c.out)?;
    say!(c, "recording {t_max} timesteps for {} samples", l.test.len());
    let trajectories = record_trajectories(&l.model, &l.test, t_max)?;
    let (_, baseline) = static_point(&trajectories, labels, t_max, &l.cost)?;

    let mut csv = String::from("t,accuracy,energy,latency,edp,energy_ratio,edp_ratio\n");
    for t in 1..=t_max {
        let (acc, cost) = static_point(&trajectories, labels, t, &l.cost)?;
        let n = cost.normalized(&baseline);
        let _ = writeln!(
            csv,
            "{t},{acc:.6},{:.6e},{:.6e},{:.6e},{:.6},{:.6}",
            cost.mean_energy, cost.mean_latency, cost.edp, n.energy, n.edp
        );
    }
    out.write("static.csv", &csv)?;

    let rows = threshold_sweep(&trajectories, labels, &l.cfg.exit.theta_grid, t_max, &l.cost)?;
    let mut header: Vec<String> = ["theta", "accuracy", "mean_t_hat", "energy", "latency", "edp", "energy_ratio", "edp_ratio"]
        .map(String::from)
        .to_vec();
    header.extend(t_columns("count_t", t_max));
    let mut csv = fmt_row(&header);
    let mut dist = String::from("theta");
    for t in 1..=t_max {
        let _ = write!(dist, ",fraction_t{t}");
    }
    dist.push('\n');
    for r in &rows {
        let s = replay_policy(&trajectories, labels, &ExitPolicy::new(r.theta, t_max)?)?;
        let mut row = vec![
            r.theta.to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.mean_t_hat),
            format!("{:.6e}", r.energy),
            format!("{:.6e}", r.latency),
            format!("{:.6e}", r.edp),
            format!("{:.6}", r.energy / baseline.mean_energy),
            format!("{:.6}", r.edp / baseline.edp),
        ];
        row.extend(s.histogram.iter().map(|h| h.to_string()));
        csv += &fmt_row(&row);
        let _ = write!(dist, "{}", r.theta);
        for h in &s.histogram {
            let _ = write!(dist, ",{:.6}", *h as f64 / labels.len() as f64);
        }
        dist.push('\n');
        say!(
            c,
            "theta {:<5} acc {:.4}  mean T^ {:.3}  EDP {:.3}x",
            r.theta,
            r.accuracy,
            r.mean_t_hat,
            r.edp / baseline.edp
        );
    }
    out.write("sweep.csv", &csv)?;
    out.write("t_hat_distribution.csv", &dist)?;
    out.finish("sweep", &l.cfg)
}

pub fn ablate(c: &Common, seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Argument("at least one seed is required".into()));
    }
    let cfg = load_config(c)?;
    let spec = cfg.model.network()?;
    let probe = Model::zeros(spec.clone())?;
    let train_set = load_split(&cfg, Split::Train, &probe)?;
    let test_set = load_split(&cfg, Split::Test, &probe)?;
    let t_max = spec.t_max;
    let t_train = cfg.train.t_train.unwrap_or(t_max);
    let cost = CostModel::new(&spec, cfg.hardware.clone())?;
    let mut out = OutDir::create(&c.out)?;

    let mut header: Vec<String> = ["seed", "loss"].map(String::from).to_vec();
    header.extend(t_columns("acc_t", t_train));
    header.extend(
        ["dt_theta", "dt_accuracy", "dt_mean_t_hat", "dt_edp_ratio", "order_hash"].map(String::from),
    );
    let mut csv = fmt_row(&header);
    for &seed in seeds {
        let mut hashes = Vec::new();
        for mode in [LossMode::Standard, LossMode::PerTimestep] {
            let tc = TrainConfig {
                seed,
                loss_mode: mode,
                ..cfg.train.clone()
            };
            say!(c, "seed {seed}, loss {mode:?}");
            let (model, log) = train_one(c, &cfg, &tc, &train_set, None)?;
            let acc = accuracy_per_timestep(&model, &test_set, t_train, tc.eval_batch_size)?;
            let trajectories: Vec<Trajectory> = record_trajectories(&model, &test_set, t_max)?;
            let (_, baseline) = static_point(&trajectories, test_set.labels(), t_max, &cost)?;
            let policy = ExitPolicy::new(cfg.exit.theta, t_max)?;
            let dt = replay_policy(&trajectories, test_set.labels(), &policy)?;
            let dt_cost = dynamic_cost(&dt, &cost)?;
            let order = log
                .records
                .iter()
                .fold(0u32, |h, r| h.rotate_left(5) ^ r.order_hash);
            hashes.push(order);
            let mut row = vec![
                seed.to_string(),
                match mode {
                    LossMode::Standard => "standard".into(),
                    LossMode::PerTimestep => "per_timestep".into(),
                },
            ];
            row.extend(acc.iter().map(|a| format!("{a:.6}")));
            row.extend([
                policy.theta.to_string(),
                format!("{:.6}", dt.accuracy),
                format!("{:.6}", dt.mean_t_hat),
                format!("{:.6}", dt_cost.edp / baseline.edp),
                format!("{order:08x}"),
            ]);
            csv += &fmt_row(&row);
            say!(c, "  accuracy per t {acc:?}; DT acc {:.4} at mean T^ {:.3}", dt.accuracy, dt.mean_t_hat);
        }
        if hashes.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::State(format!("seed {seed}: the two arms saw different data orders")));
        }
    }
    out.write("ablation.csv", &csv)?;
    out.finish("ablate", &cfg)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn hwreport(c: &Common, checkpoint: &Path, sigma_mu: Option<f64>, noise_seeds: u64) -> Result<()> {
    let l = load_for_eval(c, checkpoint)?;
    let t_max = l.model.spec().t_max;
    let labels = l.test.labels();
    let mut out = OutDir::create(&c.out)?;

    let mut csv = String::from("layer_index,fan_in,fan_out,bit_slices,row_blocks,col_blocks,crossbars,pes,tiles\n");
    for m in &l.cost.mapping.layers {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            m.layer_index, m.fan_in, m.fan_out, m.bit_slices, m.row_blocks, m.col_blocks, m.crossbar_count, m.pe_count, m.tile_count
        );
    }
    out.write("mapping.csv", &csv)?;

    let trajectories = record_trajectories(&l.model, &l.test, t_max)?;
    let mut csv = String::from(
        "timesteps,energy,latency,edp,share_crossbar_adc,share_peripherals,share_buffers_interconnect,share_sigma_e\n",
    );
    for t in 1..=t_max {
        let (_, cost) = static_point(&trajectories, labels, t, &l.cost)?;
        let s = cost.mean_breakdown.shares();
        let _ = writeln!(
            csv,
            "{t},{:.6e},{:.6e},{:.6e},{:.6},{:.6},{:.6},{:.6}",
            cost.mean_energy, cost.mean_latency, cost.edp, s[0], s[1], s[2], s[3]
        );
        say!(c, "T = {t}: energy {:.4}, shares xbar+adc {:.3} periph {:.3} rest {:.3}", cost.mean_energy, s[0], s[1], s[2] + s[3]);
    }
    out.write("breakdown.csv", &csv)?;

    if let Some(sigma) = sigma_mu {
        if !(sigma >= 0.0) {
            return Err(Error::Argument(format!("--sigma-mu {sigma} must be >= 0")));
        }
        let policy = ExitPolicy::new(l.cfg.exit.theta, t_max)?;
        let evaluate = |model: &Model| -> Result<(f64, f64, f64)> {
            let tr = record_trajectories(model, &l.test, t_max)?;
            let (static_acc, _) = static_point(&tr, labels, t_max, &l.cost)?;
            let dt = replay_policy(&tr, labels, &policy)?;
            Ok((static_acc, dt.accuracy, dt.mean_t_hat))
        };
        let clean = {
            let (static_acc, _) = static_point(&trajectories, labels, t_max, &l.cost)?;
            let dt = replay_policy(&trajectories, labels, &policy)?;
            (static_acc, dt.accuracy, dt.mean_t_hat)
        };
        let mut csv = String::from("sigma_mu,seed,static_accuracy,dt_accuracy,dt_mean_t_hat\n");
        let _ = writeln!(csv, "0,clean,{:.6},{:.6},{:.6}", clean.0, clean.1, clean.2);
        let mut rows = Vec::new();
        for seed in 0..noise_seeds {
            let noisy = apply_device_variation(&l.model, sigma, seed)?;
            let r = evaluate(&noisy)?;
            let _ = writeln!(csv, "{sigma},{seed},{:.6},{:.6},{:.6}", r.0, r.1, r.2);
            say!(c, "sigma/mu {sigma} seed {seed}: static {:.4}, DT {:.4} at mean T^ {:.3}", r.0, r.1, r.2);
            rows.push(r);
        }
        if !rows.is_empty() {
            let col = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).collect::<Vec<_>>();
            let stats = [mean_std(&col(|r| r.0)), mean_std(&col(|r| r.1)), mean_std(&col(|r| r.2))];
            let _ = writeln!(csv, "{sigma},mean,{:.6},{:.6},{:.6}", stats[0].0, stats[1].0, stats[2].0);
            let _ = writeln!(csv, "{sigma},std,{:.6},{:.6},{:.6}", stats[0].1, stats[1].1, stats[2].1);
        }
        out.write("variation.csv", &csv)?;
    }
    out.finish("hwreport", &l.cfg)
}
