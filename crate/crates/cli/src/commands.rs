//! One function per subcommand. Each loads its inputs, calls into the core
//! library, and writes reports that carry a [`RunManifest`].

use std::fs;
use std::path::Path;
use std::time::Duration;

use guardlab_client::{Client, ItemFailure, ReplayTransport, ServiceConfig, Transport};
use guardlab_core::aggregate::{aggregate_target, AggregationStrategy, Skew};
use guardlab_core::calibrate::{
    apply_temperature, fit_temperature, CalibrationConfig, CalibrationResult, ValidationExample,
};
use guardlab_core::io::{load_sets, read_jsonl, require_scored, save_sets, write_jsonl};
use guardlab_core::judge::{sweep_probability_thresholds, sweep_similarity_thresholds, JudgedPair, SweepRow};
use guardlab_core::metrics::{
    binned_lfr, dispersion, dispersion_summary, paraphrase_variability, reliability_table, safety_predictions,
    set_flips, BinnedLfrReport, DispersionSummary, ParaphraseVariability, ReliabilityBin, ThresholdSplitLfr,
};
use guardlab_core::model::ParaphraseSet;
use guardlab_core::report::{
    fmt_opt, lfr_rows, reliability_rows, reliability_svg, sensitivity_svg, sweep_rows, write_csv, write_json,
    write_text,
};
use guardlab_core::synth::{generate, judged_pairs, validation_stream, SynthConfig};
use guardlab_core::trainer::{
    evaluate, score_sets, train as fit, EvaluationReport, FeatureStore, LabeledExample, LinearScorer,
    TrainingConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::manifest::{Report, RunManifest};
use crate::{
    CalibrateArgs, CliError, EvalArgs, Format, JudgeArgs, JudgeSweepArgs, OutputArgs, ScoreArgs, ServiceArgs,
    StrategyArgs, SynthArgs, TrainArgs,
};

type CliResult<T = ()> = Result<T, CliError>;

fn prepare_out_dir(output: &OutputArgs) -> CliResult {
    fs::create_dir_all(&output.out_dir).map_err(|source| {
        CliError::Data(guardlab_core::Error::Io {
            path: output.out_dir.clone(),
            source,
        })
    })
}

fn strategy(args: &StrategyArgs) -> CliResult<AggregationStrategy> {
    let s = AggregationStrategy::new(args.strategy.into()).with_skew_threshold(args.skew_threshold);
    s.validate()?;
    Ok(s)
}

fn emit_json<T: Serialize>(manifest: &mut RunManifest, body: T, path: &Path) -> CliResult {
    manifest.finish();
    write_json(&Report { manifest, body }, path)?;
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Serialize)]
struct SetRow {
    id: String,
    original: f64,
    bin: &'static str,
    flipped: bool,
    paraphrases: usize,
    mean: f64,
    std: f64,
    max_delta: f64,
    target: f64,
    skewness: String,
    skew: String,
    chosen_percentile: String,
}

fn set_row(set: &ParaphraseSet, strategy: &AggregationStrategy) -> guardlab_core::Result<SetRow> {
    let scores = set.scores()?;
    let d = dispersion(set)?;
    let target = aggregate_target(&scores.all(), strategy)?;
    Ok(SetRow {
        id: set.id.clone(),
        original: scores.original,
        bin: guardlab_core::model::bin_of(scores.original).name(),
        flipped: set_flips(set)?,
        paraphrases: scores.paraphrases.len(),
        mean: d.mean,
        std: d.std,
        max_delta: d.max_delta,
        target: target.target,
        skewness: fmt_opt(target.skewness),
        skew: target
            .skew
            .map_or_else(|| "N/A".to_owned(), |s| skew_name(s).to_owned()),
        chosen_percentile: fmt_opt(target.chosen_percentile),
    })
}

fn skew_name(s: Skew) -> &'static str {
    match s {
        Skew::Right => "right",
        Skew::Left => "left",
        Skew::Symmetric => "symmetric",
    }
}

#[derive(Serialize)]
struct LabeledSummary {
    labeled_examples: usize,
    accuracy: Option<f64>,
    f1_unsafe: Option<f64>,
    ece: Option<f64>,
}

#[derive(Serialize)]
struct EvalBody<'a> {
    model: &'a str,
    lfr: BinnedLfrReport,
    threshold_split: ThresholdSplitLfr,
    dispersion: DispersionSummary,
    labeled: Option<LabeledSummary>,
    sets: Vec<SetRow>,
    paraphrases: Vec<ParaphraseVariability>,
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    model: &'a str,
    strategy: AggregationStrategy,
    ece_bins: usize,
    original_safe_only: bool,
    rescored: bool,
    formats: &'a [Format],
}

fn worker_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Internal(e.to_string()))
}

pub fn eval(args: EvalArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    let strategy = strategy(&args.strategy)?;
    if args.ece_bins == 0 {
        return Err(CliError::Usage("--ece-bins must be at least 1".into()));
    }
    manifest.config(&EvalConfig {
        model: &args.name,
        strategy,
        ece_bins: args.ece_bins,
        original_safe_only: args.original_safe_only,
        rescored: args.scorer.is_some(),
        formats: &args.output.format,
    })?;
    let pool = worker_pool(args.jobs)?;
    prepare_out_dir(&args.output)?;

    manifest.input(&args.sets)?;
    let mut sets = load_sets(&args.sets)?;
    if sets.is_empty() {
        return Err(guardlab_core::Error::EmptyInput("sets file").into());
    }

    let mut labeled = None;
    if let (Some(scorer_path), Some(features_path)) = (&args.scorer, &args.features) {
        manifest.input(scorer_path)?;
        manifest.input(features_path)?;
        let scorer = LinearScorer::load(scorer_path)?;
        let features = FeatureStore::load(features_path)?;
        if let Some(path) = &args.labeled {
            manifest.input(path)?;
            let examples: Vec<LabeledExample> = read_jsonl(path)?;
            let r = evaluate(&scorer, &sets, &features, &examples, args.ece_bins)?;
            labeled = Some(LabeledSummary {
                labeled_examples: r.labeled_examples,
                accuracy: r.accuracy,
                f1_unsafe: r.f1,
                ece: r.ece,
            });
        }
        sets = score_sets(&scorer, &sets, &features)?;
    } else {
        require_scored(&sets)?;
    }

    // Per-set rows fan out over the pool; collect keeps input order.
    let rows = pool.install(|| {
        sets.par_iter()
            .map(|s| set_row(s, &strategy))
            .collect::<guardlab_core::Result<Vec<_>>>()
    })?;
    let lfr = binned_lfr(&sets)?;
    let split = guardlab_core::metrics::threshold_split_lfr(&sets)?;
    let disp = dispersion_summary(&sets)?;
    let variability = paraphrase_variability(&sets, args.original_safe_only)?;

    let out = &args.output;
    if out.wants(Format::Csv) {
        write_csv(&lfr_rows(&args.name, strategy.kind.name(), &lfr, &split), out.out_dir.join("lfr.csv"))?;
        write_csv(&rows, out.out_dir.join("sets.csv"))?;
        write_csv(&variability, out.out_dir.join("paraphrases.csv"))?;
    }
    if out.wants(Format::Svg) {
        let svg = sensitivity_svg(&sets, &format!("{}: paraphrase vs original", args.name))?;
        write_text(&svg, out.out_dir.join("sensitivity.svg"))?;
    }
    if out.wants(Format::Json) {
        let body = EvalBody {
            model: &args.name,
            lfr,
            threshold_split: split,
            dispersion: disp,
            labeled,
            sets: rows,
            paraphrases: variability,
        };
        emit_json(&mut manifest, body, &out.out_dir.join("eval.json"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Serialize)]
struct TrainConfigSnapshot<'a> {
    training: TrainingConfig,
    init: Option<String>,
    scorer_out: String,
    ece_bins: usize,
    formats: &'a [Format],
}

#[derive(Serialize)]
struct TrainBody {
    history: Vec<f64>,
    sets_used: usize,
    sets_filtered: usize,
    scorer_dim: usize,
    before: Option<EvaluationReport>,
    after: Option<EvaluationReport>,
}

pub fn train(args: TrainArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    let config = TrainingConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size_sets: args.batch_sets,
        strategy: strategy(&args.strategy)?,
        min_set_size: args.min_set_size,
        min_std: args.min_std,
        variance_filter: args.variance_filter.into(),
        include_original: !args.exclude_original,
        seed: args.seed,
    };
    config.validate()?;
    if args.ece_bins == 0 {
        return Err(CliError::Usage("--ece-bins must be at least 1".into()));
    }
    manifest.seed = Some(args.seed);
    manifest.config(&TrainConfigSnapshot {
        training: config,
        init: args.init.as_ref().map(|p| p.display().to_string()),
        scorer_out: args.out.display().to_string(),
        ece_bins: args.ece_bins,
        formats: &args.output.format,
    })?;
    prepare_out_dir(&args.output)?;

    manifest.input(&args.sets)?;
    manifest.input(&args.features)?;
    let sets = load_sets(&args.sets)?;
    let features = FeatureStore::load(&args.features)?;
    let init = match &args.init {
        Some(p) => {
            manifest.input(p)?;
            Some(LinearScorer::load(p)?)
        }
        None => None,
    };
    let eval_sets = match &args.eval_sets {
        Some(p) => {
            manifest.input(p)?;
            Some(load_sets(p)?)
        }
        None => None,
    };
    let labeled: Vec<LabeledExample> = match &args.labeled {
        Some(p) => {
            manifest.input(p)?;
            read_jsonl(p)?
        }
        None => Vec::new(),
    };

    // --- Stage 1: evaluate the starting scorer ---
    let before = match (&eval_sets, &init) {
        (Some(es), Some(s)) => Some(evaluate(s, es, &features, &labeled, args.ece_bins)?),
        _ => None,
    };
    // --- Stage 2: filter by variance and train ---
    let outcome = fit(&sets, &features, &config, init)?;
    // --- Stage 3: re-evaluate ---
    let after = match &eval_sets {
        Some(es) => Some(evaluate(&outcome.scorer, es, &features, &labeled, args.ece_bins)?),
        None => None,
    };

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| {
            CliError::Data(guardlab_core::Error::Io {
                path: parent.to_path_buf(),
                source,
            })
        })?;
    }
    outcome.scorer.save(&args.out)?;

    let out = &args.output;
    if out.wants(Format::Csv) {
        #[derive(Serialize)]
        struct EpochRow {
            epoch: usize,
            mean_loss: f64,
        }
        let rows: Vec<EpochRow> = outcome
            .history
            .iter()
            .enumerate()
            .map(|(i, &mean_loss)| EpochRow { epoch: i + 1, mean_loss })
            .collect();
        write_csv(&rows, out.out_dir.join("train_history.csv"))?;
        let mut lfr = Vec::new();
        for (name, r) in [("before", &before), ("after", &after)] {
            if let Some(r) = r {
                lfr.extend(lfr_rows(name, config.strategy.kind.name(), &r.lfr, &r.threshold_split));
            }
        }
        if !lfr.is_empty() {
            write_csv(&lfr, out.out_dir.join("train_lfr.csv"))?;
        }
    }
    if out.wants(Format::Json) {
        let body = TrainBody {
            history: outcome.history,
            sets_used: outcome.sets_used,
            sets_filtered: outcome.sets_filtered,
            scorer_dim: outcome.scorer.dim(),
            before,
            after,
        };
        emit_json(&mut manifest, body, &out.out_dir.join("train.json"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- calibrate

#[derive(Serialize)]
struct CalibrateBody {
    #[serde(flatten)]
    result: CalibrationResult,
    reliability_before: Vec<ReliabilityBin>,
    reliability_after: Vec<ReliabilityBin>,
}

pub fn calibrate(args: CalibrateArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    let config = CalibrationConfig {
        t_min: args.t_min,
        t_max: args.t_max,
        ece_bins: args.ece_bins,
        ..CalibrationConfig::default()
    };
    config.validate()?;
    manifest.config(&config)?;
    prepare_out_dir(&args.output)?;

    manifest.input(&args.validation)?;
    let val: Vec<ValidationExample> = read_jsonl(&args.validation)?;
    let result = fit_temperature(&val, &config)?;

    let gold: Vec<_> = val.iter().map(|v| v.gold).collect();
    let raw: Vec<f64> = val.iter().map(|v| v.score).collect();
    let tempered: Vec<f64> = raw.iter().map(|&p| apply_temperature(p, result.temperature)).collect();
    let before = reliability_table(&safety_predictions(&raw, &gold)?, config.ece_bins)?;
    let after = reliability_table(&safety_predictions(&tempered, &gold)?, config.ece_bins)?;

    let out = &args.output;
    if out.wants(Format::Csv) {
        let mut rows = reliability_rows("before", &before);
        rows.extend(reliability_rows("after", &after));
        write_csv(&rows, out.out_dir.join("reliability.csv"))?;
    }
    if out.wants(Format::Svg) {
        let svg = reliability_svg(
            &[("before", &before), ("after", &after)],
            &format!("Reliability (t = {:.4})", result.temperature.value()),
        );
        write_text(&svg, out.out_dir.join("reliability.svg"))?;
    }
    if out.wants(Format::Json) {
        let body = CalibrateBody {
            result,
            reliability_before: before,
            reliability_after: after,
        };
        emit_json(&mut manifest, body, &out.out_dir.join("calibration.json"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- judge-sweep

#[derive(Serialize)]
struct SweepConfig<'a> {
    sim_thresholds: &'a [f64],
    sim_threshold: f64,
    prob_thresholds: &'a [f64],
}

#[derive(Serialize)]
struct SweepBody {
    pairs: usize,
    similarity: Vec<SweepRow>,
    probability: Vec<SweepRow>,
}

pub fn judge_sweep(args: JudgeSweepArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    manifest.config(&SweepConfig {
        sim_thresholds: &args.sim_thresholds,
        sim_threshold: args.sim_threshold,
        prob_thresholds: &args.prob_thresholds,
    })?;
    prepare_out_dir(&args.output)?;
    manifest.input(&args.pairs)?;
    let pairs: Vec<JudgedPair> = read_jsonl(&args.pairs)?;

    let similarity = sweep_similarity_thresholds(&pairs, &args.sim_thresholds)?;
    let probability = sweep_probability_thresholds(&pairs, args.sim_threshold, &args.prob_thresholds)?;

    let out = &args.output;
    if out.wants(Format::Csv) {
        write_csv(&sweep_rows(&similarity), out.out_dir.join("judge_similarity.csv"))?;
        write_csv(&sweep_rows(&probability), out.out_dir.join("judge_probability.csv"))?;
    }
    if out.wants(Format::Json) {
        let body = SweepBody {
            pairs: pairs.len(),
            similarity,
            probability,
        };
        emit_json(&mut manifest, body, &out.out_dir.join("judge_sweep.json"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- score / judge

#[derive(Serialize)]
struct ServiceSnapshot {
    service: Option<String>,
    replay: Option<String>,
    token_env: String,
    max_in_flight: usize,
    max_retries: u32,
    timeout_secs: f64,
    backoff_ms: u64,
}

fn service_config(args: &ServiceArgs) -> CliResult<(ServiceConfig, ServiceSnapshot)> {
    let base = match &args.service {
        Some(s) => Url::parse(s).map_err(|e| CliError::Usage(format!("--service {s:?}: {e}")))?,
        None => Url::parse("http://replay.invalid").expect("static URL"),
    };
    if !(args.timeout_secs > 0.0 && args.timeout_secs.is_finite()) {
        return Err(CliError::Usage("--timeout-secs must be positive".into()));
    }
    let config = ServiceConfig {
        auth_token_env: args.token_env.clone(),
        timeout: Duration::from_secs_f64(args.timeout_secs),
        max_retries: args.max_retries,
        max_in_flight: args.max_in_flight,
        backoff: Duration::from_millis(args.backoff_ms),
        ..ServiceConfig::new(base)
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let snapshot = ServiceSnapshot {
        service: args.service.clone(),
        replay: args.replay.as_ref().map(|p| p.display().to_string()),
        token_env: args.token_env.clone(),
        max_in_flight: args.max_in_flight,
        max_retries: args.max_retries,
        timeout_secs: args.timeout_secs,
        backoff_ms: args.backoff_ms,
    };
    Ok((config, snapshot))
}

/// Runs `f` against either the HTTP service or a replayed transcript.
fn with_client<R>(
    args: &ServiceArgs,
    config: ServiceConfig,
    manifest: &mut RunManifest,
    f: impl FnOnce(&dyn ClientOps) -> R,
) -> CliResult<R> {
    match &args.replay {
        Some(path) => {
            manifest.input(path)?;
            let client = Client::new(ReplayTransport::from_jsonl(path)?, config)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(f(&client))
        }
        None => {
            let client = Client::http(config).map_err(|e| CliError::Service(e.to_string()))?;
            Ok(f(&client))
        }
    }
}

/// Object-safe view of a client over any transport.
trait ClientOps {
    fn score_sets(&self, sets: &[ParaphraseSet], overwrite: bool) -> guardlab_client::ScoreRun;
    fn judge_pairs(&self, pairs: &[(String, String)]) -> Vec<Result<guardlab_client::JudgeReply, guardlab_client::ItemError>>;
}

impl<T: Transport> ClientOps for Client<T> {
    fn score_sets(&self, sets: &[ParaphraseSet], overwrite: bool) -> guardlab_client::ScoreRun {
        Client::score_sets(self, sets, overwrite)
    }

    fn judge_pairs(&self, pairs: &[(String, String)]) -> Vec<Result<guardlab_client::JudgeReply, guardlab_client::ItemError>> {
        Client::judge_pairs(self, pairs)
    }
}

#[derive(Serialize)]
struct ScoreConfig {
    overwrite: bool,
    output: String,
    #[serde(flatten)]
    service: ServiceSnapshot,
}

#[derive(Serialize)]
struct ScoreBody {
    sets: usize,
    requested: usize,
    scored: usize,
    written: bool,
    failures: Vec<ItemFailure>,
}

pub fn score(args: ScoreArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    let (config, snapshot) = service_config(&args.service)?;
    manifest.config(&ScoreConfig {
        overwrite: args.overwrite,
        output: args.out.display().to_string(),
        service: snapshot,
    })?;
    prepare_out_dir(&args.output)?;
    manifest.input(&args.sets)?;
    let sets = load_sets(&args.sets)?;

    let run = with_client(&args.service, config, &mut manifest, |c| c.score_sets(&sets, args.overwrite))?;

    // Nothing is written when every request failed, so a dead service leaves
    // the output untouched. Partial results are kept with their annotations.
    let written = run.requested == 0 || run.scored > 0;
    if written {
        save_sets(&run.sets, &args.out)?;
    }
    let failed = run.failures.len();
    let requested = run.requested;
    if args.output.wants(Format::Json) {
        let body = ScoreBody {
            sets: run.sets.len(),
            requested,
            scored: run.scored,
            written,
            failures: run.failures,
        };
        emit_json(&mut manifest, body, &args.output.out_dir.join("score.json"))?;
    }
    if failed > 0 {
        return Err(CliError::Service(format!("{failed} of {requested} scoring requests failed")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct PairInput {
    a: String,
    b: String,
    #[serde(default)]
    gold_similarity: Option<f64>,
}

#[derive(Serialize)]
struct PairFailure {
    index: usize,
    kind: &'static str,
    message: String,
}

#[derive(Serialize)]
struct JudgeBody {
    requested: usize,
    judged: usize,
    prob_defaulted: Vec<usize>,
    failures: Vec<PairFailure>,
}

pub fn judge(args: JudgeArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    let (config, snapshot) = service_config(&args.service)?;
    manifest.config(&ScoreConfig {
        overwrite: false,
        output: args.out.display().to_string(),
        service: snapshot,
    })?;
    prepare_out_dir(&args.output)?;
    manifest.input(&args.pairs)?;
    let inputs: Vec<PairInput> = read_jsonl(&args.pairs)?;
    let texts: Vec<(String, String)> = inputs.iter().map(|p| (p.a.clone(), p.b.clone())).collect();

    let replies = with_client(&args.service, config, &mut manifest, |c| c.judge_pairs(&texts))?;

    let mut judged = Vec::new();
    let mut defaulted = Vec::new();
    let mut failures = Vec::new();
    for (index, (input, reply)) in inputs.iter().zip(replies).enumerate() {
        match reply {
            Ok(r) => {
                if r.prob_defaulted {
                    eprintln!("guardlab: pair {index}: no probability in reply, assuming 1.0");
                    defaulted.push(index);
                }
                judged.push(JudgedPair {
                    gold_similarity: input.gold_similarity,
                    ..r.pair
                });
            }
            Err(e) => failures.push(PairFailure {
                index,
                kind: e.kind(),
                message: e.to_string(),
            }),
        }
    }
    if !judged.is_empty() {
        write_jsonl(&judged, &args.out)?;
    }
    let failed = failures.len();
    if args.output.wants(Format::Json) {
        let body = JudgeBody {
            requested: inputs.len(),
            judged: judged.len(),
            prob_defaulted: defaulted,
            failures,
        };
        emit_json(&mut manifest, body, &args.output.out_dir.join("judge.json"))?;
    }
    if failed > 0 {
        return Err(CliError::Service(format!("{failed} of {} judge requests failed", inputs.len())));
    }
    Ok(())
}

// ---------------------------------------------------------------- synth

#[derive(Serialize)]
struct SynthSnapshot {
    corpus: SynthConfig,
    validation: usize,
    validation_sharpen: f64,
    pairs: usize,
}

#[derive(Serialize)]
struct SynthBody {
    files: Vec<&'static str>,
}

/// Validation scores are drawn as sigmoid(2z) against labels drawn from
/// sigmoid(z), so the temperature that undoes them is 2.
const VALIDATION_SHARPEN: f64 = 2.0;

pub fn synth(args: SynthArgs, argv: Vec<String>) -> CliResult {
    let mut manifest = RunManifest::start(argv);
    let cfg = SynthConfig {
        train_sets: args.train_sets,
        heldout_sets: args.heldout_sets,
        labeled: args.labeled,
        mode: args.mode.into(),
        seed: args.seed,
        ..SynthConfig::default()
    };
    manifest.seed = Some(args.seed);
    manifest.config(&SynthSnapshot {
        corpus: cfg,
        validation: args.validation,
        validation_sharpen: VALIDATION_SHARPEN,
        pairs: args.pairs,
    })?;
    prepare_out_dir(&args.output)?;
    let dir = &args.output.out_dir;

    let corpus = generate(&cfg)?;
    save_sets(&corpus.train_sets, dir.join("train_sets.jsonl"))?;
    save_sets(&corpus.heldout_sets, dir.join("heldout_sets.jsonl"))?;
    corpus.features.save(dir.join("features.jsonl"))?;
    write_jsonl(&corpus.labeled, dir.join("labeled.jsonl"))?;
    corpus.initial_scorer.save(dir.join("init_scorer.json"))?;
    write_jsonl(
        &validation_stream(args.validation, VALIDATION_SHARPEN, args.seed.wrapping_add(1)),
        dir.join("validation.jsonl"),
    )?;
    write_jsonl(&judged_pairs(args.pairs, args.seed.wrapping_add(2)), dir.join("pairs.jsonl"))?;

    let body = SynthBody {
        files: vec![
            "train_sets.jsonl",
            "heldout_sets.jsonl",
            "features.jsonl",
            "labeled.jsonl",
            "init_scorer.json",
            "validation.jsonl",
            "pairs.jsonl",
        ],
    };
    emit_json(&mut manifest, body, &dir.join("synth.json"))?;
    Ok(())
}
