//! Experiment dispatch and artifact writing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};

use crate::bcdl::{posterior_mean_factors, posterior_mean_scores, run_gibbs, GibbsOptions, GibbsState};
use crate::cdl::{predict, recall_at_m, train_cdl_observed, update_user, CdlData, CdlMode, CdlOptions, RecallReport};
use crate::checkpoint::{self, net_tensors, Tensor};
use crate::corpus::{corrupt, load_bow, load_graph, load_ratings, split_ratings, BagOfWords, CorruptionSpec, ImplicitRatings};
use crate::dpfa::{self, export_topics, run_dpfa, split_tokens, DpfaBackend, DpfaOptions, PfaHyper};
use crate::error::{BdlError, Result};
use crate::mcdl::{train_mcdl_observed, McdlData, McdlHyper, McdlOptions};
use crate::net::{Hyperparams, NetParams};
use crate::rng::{block_rng, child_seed};
use crate::rsdae::{train_rsdae, RsdaeData, RsdaeOptions};

use super::config::{ExperimentConfig, Task};

/// Identifier of the build that produced an artifact (`git describe` when
/// available at compile time).
pub const BUILD_ID: &str = env!("BDL_BUILD_ID");

/// Where the artifacts of a run went and its headline metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output: PathBuf,
    /// `(name, value)`, e.g. `("recall@50", 0.41)`.
    pub headline: Option<(String, f64)>,
}

/// Rows of `metrics.csv` plus a header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl MetricsTable {
    fn new(header: &[&str]) -> Self {
        MetricsTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn num(x: f64) -> String {
    format!("{}", x)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| BdlError::io(path, e))
}

/// Everything a task produces before it is written out.
struct TaskOutput {
    metrics: MetricsTable,
    result: Vec<(String, String)>,
    checkpoint: Vec<Tensor>,
    headline: Option<(String, f64)>,
    extra_files: Vec<(String, String)>,
    samples: Vec<(String, Vec<Tensor>)>,
}

impl TaskOutput {
    fn new(metrics: MetricsTable) -> Self {
        TaskOutput {
            metrics,
            result: Vec::new(),
            checkpoint: Vec::new(),
            headline: None,
            extra_files: Vec::new(),
            samples: Vec::new(),
        }
    }
}

/// Runs one experiment and writes `config.txt`, `manifest.txt`,
/// `metrics.csv`, `result.txt`, `checkpoint.bin` and any task-specific files
/// (`topics.tsv`, `samples/`) into the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| BdlError::io(out, e))?;
    write(&out.join("config.txt"), cfg.echo())?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "task = {}", cfg.task.name());
    let _ = writeln!(manifest, "seed = {}", cfg.seed);
    let _ = writeln!(manifest, "config_sha256 = {}", cfg.hash());
    let _ = writeln!(manifest, "variance = {}", cfg.variance.label());
    let _ = writeln!(manifest, "build = {}", BUILD_ID);
    write(&out.join("manifest.txt"), &manifest)?;

    log::info!("running {} (seed {}) into {}", cfg.task.name(), cfg.seed, out.display());
    let result = match cfg.task {
        Task::Cdl | Task::Cdr => run_cdl(cfg),
        Task::Mcdl | Task::McdlSym => run_mcdl(cfg),
        Task::Bcdl => run_bcdl(cfg),
        Task::Rsdae => run_rsdae(cfg),
        Task::Dpfa => run_dpfa_task(cfg),
    }
    .map_err(|e| e.context(format!("task {}", cfg.task.name())))?;

    write(&out.join("metrics.csv"), result.metrics.to_csv())?;
    let mut summary = String::new();
    for (k, v) in &result.result {
        let _ = writeln!(summary, "{} = {}", k, v);
    }
    write(&out.join("result.txt"), summary)?;
    checkpoint::save(out.join("checkpoint.bin"), &result.checkpoint)?;
    for (name, text) in &result.extra_files {
        write(&out.join(name), text)?;
    }
    if !result.samples.is_empty() {
        let dir = out.join("samples");
        std::fs::create_dir_all(&dir).map_err(|e| BdlError::io(&dir, e))?;
        for (name, tensors) in &result.samples {
            checkpoint::save(dir.join(name), tensors)?;
        }
    }
    Ok(RunSummary {
        output: out.clone(),
        headline: result.headline,
    })
}

/// Network and training constants shared by the network-based tasks.
pub fn hyperparams(cfg: &ExperimentConfig) -> Result<Hyperparams<f64>> {
    let h = Hyperparams {
        lambda_w: cfg.get("lambda_w")?,
        lambda_n: cfg.get("lambda_n")?,
        lambda_v: cfg.get("lambda_v")?,
        lambda_u: cfg.get("lambda_u")?,
        lambda_s: cfg.get("lambda_s")?,
        lambda_r: cfg.get("lambda_r")?,
        lambda_l: cfg.get("lambda_l")?,
        a: cfg.get("a")?,
        b: cfg.get("b")?,
        learning_rate: cfg.get("learning_rate")?,
        momentum: cfg.get("momentum")?,
        corruption: cfg.get("corruption")?,
        batch_size: cfg.get("batch_size")?,
    };
    h.validate()?;
    Ok(h)
}

/// Loaded collaborative-filtering inputs.
pub struct CfInputs {
    pub content: BagOfWords,
    pub xc: Array2<f64>,
    pub x0: Array2<f64>,
    pub train: ImplicitRatings,
    pub test: ImplicitRatings,
}

/// Clean and corrupted dense content, scaled to `[0, 1]` by the clean
/// row maxima.
pub fn content_views(content: &BagOfWords, corruption: f64, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    let spec = CorruptionSpec::new(corruption, child_seed(seed, "corrupt"))
        .map_err(|e| BdlError::config("corruption", e.to_string()))?;
    Ok((content.normalized(), corrupt(content, spec).normalized_by(content)))
}

fn ratings_split(cfg: &ExperimentConfig, train: ImplicitRatings, n_items: usize) -> Result<(ImplicitRatings, ImplicitRatings)> {
    let (a, b) = (cfg.get("a")?, cfg.get("b")?);
    if train.n_items() != n_items {
        return Err(BdlError::dim(format!("ratings cover {} items but content has {} rows", train.n_items(), n_items)));
    }
    match cfg.path("test_ratings")? {
        Some(p) => {
            let test = load_ratings(&p, a, b)?;
            if test.n_items() != n_items || test.n_users() != train.n_users() {
                return Err(BdlError::dim("test ratings do not match the training ratings' shape"));
            }
            Ok((train, test))
        }
        None => split_ratings(&train, cfg.get("held_out")?, child_seed(cfg.seed, "split")),
    }
}

fn load_cf(cfg: &ExperimentConfig) -> Result<CfInputs> {
    let content = load_bow(cfg.required_path("content")?)?;
    let ratings = load_ratings(cfg.required_path("ratings")?, cfg.get("a")?, cfg.get("b")?)?;
    let (train, test) = ratings_split(cfg, ratings, content.n_rows())?;
    let (xc, x0) = content_views(&content, cfg.get("corruption")?, cfg.seed)?;
    Ok(CfInputs {
        content,
        xc,
        x0,
        train,
        test,
    })
}

fn init_net(cfg: &ExperimentConfig, input: usize) -> Result<NetParams<f64>> {
    let mut rng = block_rng(child_seed(cfg.seed, "net-init"), 0, 0);
    NetParams::init_autoencoder(input, &cfg.widths("layers")?, cfg.get("init_std")?, &mut rng)
}

fn recall_of(scores: ArrayView2<'_, f64>, train: &ImplicitRatings, test: &ImplicitRatings, m: usize) -> Result<RecallReport> {
    recall_at_m(scores, train, test, m)
}

fn cdl_options(cfg: &ExperimentConfig) -> Result<CdlOptions> {
    let mode_text = cfg.raw("mode")?;
    let mode = CdlMode::parse(mode_text)
        .ok_or_else(|| BdlError::config("mode", format!("expected joint, two-step or decoder-free, got `{}`", mode_text)))?;
    Ok(CdlOptions {
        epochs: cfg.get("epochs")?,
        net_passes: cfg.get("net_passes")?,
        mode,
        seed: cfg.seed,
        ranking_pairs: if cfg.task == Task::Cdr { Some(cfg.get("ranking_pairs")?) } else { None },
        init_std: cfg.get("init_std")?,
    })
}

fn factor_tensors(u: &Array2<f64>, v: &Array2<f64>) -> Vec<Tensor> {
    vec![Tensor::from_matrix("U", u), Tensor::from_matrix("V", v)]
}

fn run_cdl(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let inputs = load_cf(cfg)?;
    let hyper = hyperparams(cfg)?;
    let opts = cdl_options(cfg)?;
    let m: usize = cfg.get("recall_m")?;
    let recall_col = format!("recall@{}", m);
    let mut table = MetricsTable::new(&["epoch", "objective", "before_sweep", "after_sweep", &recall_col]);
    let data = CdlData {
        x0: inputs.x0.clone(),
        xc: inputs.xc.clone(),
        ratings: inputs.train.clone(),
    };
    let params = init_net(cfg, inputs.content.n_cols())?;
    let mut failure = None;
    let model = train_cdl_observed(&data, params, &hyper, &opts, &mut |rec, params, f| {
        let recall = predict(f.u.view(), f.v.view(), params, inputs.x0.view(), &[])
            .and_then(|s| recall_of(s.view(), &inputs.train, &inputs.test, m));
        match recall {
            Ok(r) => table.push(vec![
                rec.epoch.to_string(),
                num(rec.objective),
                num(rec.before_sweep),
                num(rec.after_sweep),
                num(r.mean),
            ]),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let scores = predict(model.factors.u.view(), model.factors.v.view(), &model.params, inputs.x0.view(), &[])?;
    let report = recall_of(scores.view(), &inputs.train, &inputs.test, m)?;
    let mut out = TaskOutput::new(table);
    out.result = vec![
        (recall_col.clone(), num(report.mean)),
        ("users_evaluated".into(), report.n_evaluated.to_string()),
        ("mode".into(), opts.mode.label().into()),
    ];
    out.headline = Some((recall_col, report.mean));
    out.checkpoint = net_tensors(&model.params);
    out.checkpoint.extend(factor_tensors(&model.factors.u, &model.factors.v));
    Ok(out)
}

fn run_mcdl(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let inputs = load_cf(cfg)?;
    let m: usize = cfg.get("recall_m")?;
    let p: f64 = cfg.get("corruption")?;
    let users = if cfg.task == Task::McdlSym {
        let uc = load_bow(cfg.required_path("user_content")?)?;
        if uc.n_rows() != inputs.train.n_users() {
            return Err(BdlError::dim("user_content rows must match rating users"));
        }
        Some(uc.normalized::<f64>())
    } else {
        None
    };
    // the masking noise is integrated out analytically, so the clean
    // content is the input on both sides
    let data = McdlData::new(
        inputs.xc.view(),
        inputs.xc.clone(),
        inputs.train.clone(),
        users.as_ref().map(|y| (y.view(), y.clone())),
        p,
    )?;
    let hyper = McdlHyper {
        lambda_u: cfg.get("lambda_u")?,
        lambda_v: cfg.get("lambda_v")?,
    };
    let latent = *cfg.widths("layers")?.last().expect("nonempty");
    let opts = McdlOptions {
        iters: cfg.get("epochs")?,
        latent,
        seed: cfg.seed,
        init_std: cfg.get("init_std")?,
    };
    let recall_col = format!("recall@{}", m);
    let mut table = MetricsTable::new(&["iter", "objective", &recall_col]);
    let mut failure = None;
    let model = train_mcdl_observed(&data, &hyper, &opts, &mut |rec, s| {
        match recall_of(s.u.dot(&s.v.t()).view(), &inputs.train, &inputs.test, m) {
            Ok(r) => table.push(vec![rec.iter.to_string(), num(rec.objective), num(r.mean)]),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let s = &model.state;
    let report = recall_of(s.u.dot(&s.v.t()).view(), &inputs.train, &inputs.test, m)?;
    let mut out = TaskOutput::new(table);
    out.result = vec![
        (recall_col.clone(), num(report.mean)),
        ("users_evaluated".into(), report.n_evaluated.to_string()),
        ("initial_objective".into(), num(model.initial_objective)),
    ];
    out.headline = Some((recall_col, report.mean));
    out.checkpoint = factor_tensors(&s.u, &s.v);
    out.checkpoint.push(Tensor::from_matrix("W1", &s.w1));
    out.checkpoint.push(Tensor::from_matrix("P1", &s.p1));
    if let (Some(w2), Some(p2)) = (&s.w2, &s.p2) {
        out.checkpoint.push(Tensor::from_matrix("W2", w2));
        out.checkpoint.push(Tensor::from_matrix("P2", p2));
    }
    Ok(out)
}

fn run_bcdl(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let inputs = load_cf(cfg)?;
    let hyper = hyperparams(cfg)?;
    let m: usize = cfg.get("recall_m")?;
    let data = CdlData {
        x0: inputs.x0.clone(),
        xc: inputs.xc.clone(),
        ratings: inputs.train.clone(),
    };
    let opts = CdlOptions {
        mode: CdlMode::Joint,
        ranking_pairs: None,
        ..cdl_options(cfg)?
    };
    let map = train_cdl_observed(&data, init_net(cfg, inputs.content.n_cols())?, &hyper, &opts, &mut |_, _, _| {})?;
    let map_scores = predict(map.factors.u.view(), map.factors.v.view(), &map.params, inputs.x0.view(), &[])?;
    let map_recall = recall_of(map_scores.view(), &inputs.train, &inputs.test, m)?;

    let gibbs = GibbsOptions {
        sweeps: cfg.get("sweeps")?,
        burn_in: cfg.get("burn_in")?,
        thin: cfg.get("thin")?,
        activation_step: cfg.get("activation_step")?,
        weight_step: cfg.get("weight_step")?,
    };
    let init = GibbsState::from_map(&map, inputs.x0.view(), child_seed(cfg.seed, "bcdl"))?;
    let run = run_gibbs(&data, &hyper, init, &gibbs)?;
    let scores = posterior_mean_scores(&run.samples)?;
    let report = recall_of(scores.view(), &inputs.train, &inputs.test, m)?;

    let mut table = MetricsTable::new(&["sweep", "log_density", "activation_acceptance", "weight_acceptance"]);
    for r in &run.trace {
        table.push(vec![
            r.sweep.to_string(),
            num(r.log_density),
            num(r.activation_acceptance),
            num(r.weight_acceptance),
        ]);
    }
    let recall_col = format!("recall@{}", m);
    let mut out = TaskOutput::new(table);
    out.result = vec![
        (recall_col.clone(), num(report.mean)),
        (format!("map_{}", recall_col), num(map_recall.mean)),
        ("users_evaluated".into(), report.n_evaluated.to_string()),
        ("samples".into(), run.samples.len().to_string()),
    ];
    out.headline = Some((recall_col, report.mean));
    let (u, v) = posterior_mean_factors(&run.samples)?;
    out.checkpoint = factor_tensors(&u, &v);
    out.checkpoint.push(Tensor::from_matrix("scores", &scores));
    for s in &run.samples {
        let mut t = net_tensors(&s.params);
        t.extend(factor_tensors(&s.u, &s.v));
        out.samples.push((format!("sample_{:05}.bin", s.sweep), t));
    }
    Ok(out)
}

/// Tag vectors fitted against fixed item representations (`S` columns).
fn fit_tags(items: ArrayView2<'_, f64>, train: &ImplicitRatings, lambda_u: f64) -> Result<Array2<f64>> {
    let mut u = Array2::zeros((train.n_users(), items.ncols()));
    for i in 0..train.n_users() {
        u.row_mut(i).assign(&update_user(i, items, train, lambda_u)?);
    }
    Ok(u)
}

fn run_rsdae(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let content = load_bow(cfg.required_path("content")?)?;
    let graph = load_graph(cfg.required_path("graph")?)?;
    if graph.n_nodes() != content.n_rows() {
        return Err(BdlError::dim("graph nodes must match content rows"));
    }
    let (xc, x0) = content_views(&content, cfg.get("corruption")?, cfg.seed)?;
    let hyper = hyperparams(cfg)?;
    let opts = RsdaeOptions {
        epochs: cfg.get("epochs")?,
        net_passes: cfg.get("net_passes")?,
        pretrain_passes: cfg.get("pretrain_passes")?,
        seed: cfg.seed,
        max_steepest_iters: cfg.get("max_steepest_iters")?,
    };
    let params = init_net(cfg, content.n_cols())?;
    let model = train_rsdae(&RsdaeData { x0, xc, graph }, params, &hyper, &opts)?;
    let mut table = MetricsTable::new(&["epoch", "before_s", "after_s", "objective", "max_iterations"]);
    for r in &model.trace {
        table.push(vec![
            r.epoch.to_string(),
            num(r.before_s),
            num(r.after_s),
            num(r.objective),
            r.max_iterations.to_string(),
        ]);
    }
    let mut out = TaskOutput::new(table);
    out.checkpoint = net_tensors(&model.params);
    out.checkpoint.push(Tensor::from_matrix("S", &model.s));
    if let Some(p) = cfg.path("ratings")? {
        let m: usize = cfg.get("recall_m")?;
        let tags = load_ratings(&p, cfg.get("a")?, cfg.get("b")?)?;
        let (train, test) = ratings_split(cfg, tags, content.n_rows())?;
        let items = model.s.t().to_owned();
        let u = fit_tags(items.view(), &train, hyper.lambda_u)?;
        let report = recall_of(u.dot(&model.s).view(), &train, &test, m)?;
        let col = format!("recall@{}", m);
        out.result.push((col.clone(), num(report.mean)));
        out.result.push(("users_evaluated".into(), report.n_evaluated.to_string()));
        out.headline = Some((col, report.mean));
        out.checkpoint.extend(factor_tensors(&u, &items));
    }
    out.result.push(("objective".into(), num(model.trace.last().map(|r| r.objective).unwrap_or(f64::NAN))));
    Ok(out)
}

/// Topic-model priors and sampler constants from the config.
pub fn pfa_hyper(cfg: &ExperimentConfig) -> Result<PfaHyper> {
    let h = PfaHyper {
        a_phi: cfg.get("a_phi")?,
        e0: cfg.get("e0")?,
        f0: cfg.get("f0")?,
        c0: cfg.get("c0")?,
        a0: cfg.get("a0")?,
        b0: cfg.get("b0")?,
        sbn_prior_var: cfg.get("sbn_prior_var")?,
        sgnht_d: cfg.get("sgnht_d")?,
        sgnht_step: cfg.get("sgnht_step")?,
        sgnht_mass: cfg.opt_f64("sgnht_mass")?,
    };
    h.validate()?;
    Ok(h)
}

fn run_dpfa_task(cfg: &ExperimentConfig) -> Result<TaskOutput> {
    let counts = load_bow(cfg.required_path("counts")?)?;
    let vocab = match cfg.path("vocab")? {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| BdlError::io(&p, e))?;
            let words: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
            if words.len() < counts.n_cols() {
                return Err(BdlError::config("vocab", format!("{} words for a vocabulary of {}", words.len(), counts.n_cols())));
            }
            Some(words)
        }
        None => None,
    };
    let hyper = pfa_hyper(cfg)?;
    let fraction: f64 = cfg.get("heldout_fraction")?;
    let (train, heldout) = split_tokens(&counts, fraction, child_seed(cfg.seed, "heldout"))
        .map_err(|e| BdlError::config("heldout_fraction", e.to_string()))?;
    let widths = cfg.widths("topic_layers")?;
    let backend_text = cfg.raw("backend")?;
    let opts = DpfaOptions {
        sweeps: cfg.get("sweeps")?,
        burn_in: cfg.get("burn_in")?,
        thin: cfg.get("thin")?,
        backend: DpfaBackend::parse(backend_text)?,
        seed: cfg.seed,
        sgnht_steps: cfg.get("sgnht_steps")?,
        rate_step: cfg.get("rate_step")?,
        sbn_step: cfg.get("sbn_step")?,
    };
    let init = dpfa::init_state(&train, &widths, cfg.seed)?;
    let held = if fraction > 0.0 { Some(&heldout) } else { None };
    let run = run_dpfa(&train, init, &hyper, &opts, held)?;

    let mut table = MetricsTable::new(&[
        "sweep",
        "train_loglik",
        "heldout_per_word",
        "r_acceptance",
        "sbn_acceptance",
        "active_topic_fraction",
    ]);
    for r in &run.trace {
        table.push(vec![
            r.sweep.to_string(),
            num(r.train_loglik),
            opt_num(r.heldout_per_word),
            opt_num(r.r_acceptance),
            opt_num(r.sbn_acceptance),
            num(r.active_topic_fraction),
        ]);
    }
    let k = widths[0];
    let mut mean_phi = Array2::<f64>::zeros((k, counts.n_cols()));
    for s in &run.samples {
        mean_phi += &s.phi;
    }
    if !run.samples.is_empty() {
        mean_phi /= run.samples.len() as f64;
    }
    let mut out = TaskOutput::new(table);
    let topic_words: usize = cfg.get("topic_words")?;
    out.extra_files.push(("topics.tsv".into(), export_topics(mean_phi.view(), vocab.as_deref(), topic_words)));
    let last = run.trace.last();
    if let Some(h) = last.and_then(|r| r.heldout_per_word) {
        out.result.push(("heldout_per_word".into(), num(h)));
        out.headline = Some(("heldout_per_word".into(), h));
    }
    out.result.push(("train_loglik".into(), num(last.map(|r| r.train_loglik).unwrap_or(f64::NAN))));
    out.result.push(("samples".into(), run.samples.len().to_string()));
    out.checkpoint = pfa_tensors(&mean_phi, &run.state);
    for s in &run.samples {
        out.samples.push((
            format!("sample_{:05}.bin", s.sweep),
            vec![Tensor::from_matrix("phi", &s.phi), Tensor::from_vector("r", &s.r)],
        ));
    }
    Ok(out)
}

fn pfa_tensors(mean_phi: &Array2<f64>, state: &dpfa::PfaState) -> Vec<Tensor> {
    let mut t = vec![
        Tensor::from_matrix("phi", mean_phi),
        Tensor::from_vector("r", &state.r),
        Tensor::from_vector("gamma0", &Array1::from_elem(1, state.gamma0)),
    ];
    for (l, w) in state.sbn.weights.iter().enumerate() {
        t.push(Tensor::from_matrix(&format!("sbn_W{}", l + 1), w));
    }
    for (l, b) in state.sbn.biases.iter().enumerate() {
        t.push(Tensor::from_vector(&format!("sbn_b{}", l + 1), b));
    }
    t
}

/// recall@M of a checkpoint against a ratings file. Uses a stored `scores`
/// tensor when present, otherwise `U Vᵀ`. Positives in `train` (when given)
/// are excluded from the ranked lists.
pub fn evaluate_checkpoint(checkpoint_path: &Path, ratings_path: &Path, train_path: Option<&Path>, m: usize) -> Result<RecallReport> {
    let tensors = checkpoint::load(checkpoint_path)?;
    let scores: Array2<f64> = match checkpoint::find(&tensors, "scores") {
        Some(s) => s.to_matrix(),
        None => match (checkpoint::find(&tensors, "U"), checkpoint::find(&tensors, "V")) {
            (Some(u), Some(v)) => {
                let (u, v): (Array2<f64>, Array2<f64>) = (u.to_matrix(), v.to_matrix());
                if u.ncols() != v.ncols() {
                    return Err(BdlError::dim("U and V have different latent widths"));
                }
                u.dot(&v.t())
            }
            _ => {
                return Err(BdlError::validation(format!(
                    "{} holds neither `scores` nor `U` and `V`",
                    checkpoint_path.display()
                )))
            }
        },
    };
    let test = load_ratings(ratings_path, 1.0, 0.01)?;
    let train = match train_path {
        Some(p) => load_ratings(p, 1.0, 0.01)?,
        None => ImplicitRatings::new(test.n_items(), vec![Vec::new(); test.n_users()], 1.0, 0.01)?,
    };
    recall_at_m(scores.view(), &train, &test, m)
}
