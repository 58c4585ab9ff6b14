//! `mbs`: command-line front end for the memboson library.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use memboson::analysis::{self, Estimator, ScalingConfig};
use memboson::config::{layered, KeyValueConfig, RunSummary};
use memboson::error::{create_file, open_file};
use memboson::eventstream::{self, ChannelMap, ClockModel, NoiseModel, Source, StreamConfig, CHANNELS};
use memboson::matrix::{haar_random_unitary, ComplexMatrix};
use memboson::network::{build_scattering_matrix, layer_graph, LayeredNetwork};
use memboson::pipeline::{self, CalibrationTable, ExtractParams};
use memboson::sampling::{self, Distribution, OccupancyPattern, Statistics};
use memboson::{permanent, svg, Error, RandomSeed, Result};

#[derive(Parser)]
#[command(name = "mbs", version, about = "Timestamp membosonsampling toolkit")]
struct Cli {
    /// Where to write the run summary JSON [default: <output>.summary.json,
    /// or mbs-<command>.summary.json when the command has no output file].
    #[arg(long, global = true)]
    summary: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Haar-random unitary as a text matrix.
    GenUnitary(GenUnitary),
    /// Layered looped network from Haar blocks, with its scattering matrix.
    BuildNet(BuildNet),
    /// Exact output distribution for one input pattern.
    Distribution(DistributionCmd),
    /// Draw output patterns from a distribution CSV.
    Sample(SampleCmd),
    /// Synthetic MBS1 detector stream.
    GenEvents(GenEvents),
    /// Channel delay scan and optional drift fit.
    Calibrate(CalibrateCmd),
    /// Multi-layer coincidence extraction.
    Extract(ExtractCmd),
    /// Probabilities from event timestamps.
    Reconstruct(ReconstructCmd),
    /// Likelihood-ratio counter against two model distributions.
    Validate(ValidateCmd),
    /// Bhattacharyya fidelity of two distributions.
    Fidelity(FidelityCmd),
    /// log10 of the number of n'-photon configurations over N*m modes.
    Complexity(ComplexityCmd),
    /// Coincidence counts versus layer count and fold.
    Scaling(ScalingCmd),
    /// Time naive and Ryser permanents.
    BenchPermanent(BenchCmd),
}

#[derive(Args)]
struct GenUnitary {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildNet {
    /// Number of layers N.
    #[arg(long)]
    layers: usize,
    /// Modes per layer m [default 15: usable chip outputs].
    #[arg(long, default_value_t = 15)]
    modes: usize,
    /// Loop transition amplitude p in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    transition: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Network JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full scattering matrix as text.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    /// Also write the layer graph edge list.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsArg {
    Indistinguishable,
    Distinguishable,
}

impl From<StatsArg> for Statistics {
    fn from(s: StatsArg) -> Self {
        match s {
            StatsArg::Indistinguishable => Statistics::Indistinguishable,
            StatsArg::Distinguishable => Statistics::Distinguishable,
        }
    }
}

#[derive(Args)]
struct DistributionCmd {
    /// Network JSON; its scattering matrix is used.
    #[arg(long, conflicts_with = "unitary", required_unless_present = "unitary")]
    net: Option<PathBuf>,
    /// Text matrix used directly.
    #[arg(long)]
    unitary: Option<PathBuf>,
    /// Input occupation pattern, e.g. 1-0-1.
    #[arg(long)]
    input: OccupancyPattern,
    #[arg(long, value_enum, default_value = "indistinguishable")]
    stats: StatsArg,
    /// Only outputs with at most one photon per mode.
    #[arg(long)]
    collision_free: bool,
    /// Keep only outputs reachable without signals preceding triggers
    /// (needs --net), renormalized.
    #[arg(long, requires = "net")]
    causal: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SampleCmd {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// One pattern per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    /// Heralded multi-photon events drawn from --dist.
    Patterns,
    /// Independent heralded pairs on --pair-inputs.
    Pairs,
    /// Isolated same-channel click pairs for drift fitting.
    DriftProbes,
}

#[derive(Args)]
struct GenEvents {
    #[arg(long, value_enum, default_value = "patterns")]
    source: SourceArg,
    /// Network JSON (patterns and pairs sources).
    #[arg(long)]
    net: Option<PathBuf>,
    /// Input pattern over the network's global modes (patterns source).
    #[arg(long)]
    input: Option<OccupancyPattern>,
    /// Output distribution CSV (patterns source).
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Probability that an event starts on a free pulse.
    #[arg(long, default_value_t = 0.5)]
    fire_probability: f64,
    /// Chip inputs pumped by the pairs source, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pair_inputs: Vec<usize>,
    /// Pair probability per pulse and pumped input.
    #[arg(long, default_value_t = 0.001)]
    pair_probability: f64,
    /// Number of pulses simulated (12.5 ns each).
    #[arg(long, default_value_t = 100_000)]
    pulses: u64,
    /// Drift-probe count and largest layer interval.
    #[arg(long, default_value_t = 2000)]
    probes: usize,
    #[arg(long, default_value_t = 1000)]
    max_interval: u64,
    /// Apply the published signal/trigger drift fits.
    #[arg(long)]
    published_drift: bool,
    /// Full noise model as JSON; the flags below override it.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    jitter_ps: Option<f64>,
    /// Dark count rate applied to every signal and trigger channel.
    #[arg(long)]
    dark_rate_hz: Option<f64>,
    /// Detection efficiency applied to every channel.
    #[arg(long)]
    efficiency: Option<f64>,
    /// Channel delay, e.g. --delay 5=3.0 (repeatable).
    #[arg(long, value_parser = parse_delay)]
    delay: Vec<(u8, f64)>,
    #[arg(long)]
    extra_pair_probability: Option<f64>,
    #[arg(long)]
    channel_map: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth events CSV (patterns source).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

fn parse_delay(s: &str) -> std::result::Result<(u8, f64), String> {
    let (c, d) = s.split_once('=').ok_or("expected CHANNEL=NS")?;
    let c: u8 = c.trim().parse().map_err(|e| format!("bad channel: {e}"))?;
    if c as usize >= CHANNELS {
        return Err(format!("channel {c} outside 0-31"));
    }
    Ok((c, d.trim().parse().map_err(|e| format!("bad delay: {e}"))?))
}

#[derive(Args)]
struct CalibrateCmd {
    /// Stream with correlated clicks on every channel to calibrate.
    #[arg(long)]
    stream: PathBuf,
    /// Reference channel [default 16: trigger 1].
    #[arg(long, default_value_t = 16)]
    reference: u8,
    /// Drift-probe stream to fit the per-class drift from.
    #[arg(long)]
    drift_stream: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    max_interval: u64,
    #[arg(long)]
    channel_map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractCmd {
    #[arg(long)]
    stream: PathBuf,
    /// Calibration JSON [default: zero offsets, no drift].
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// key = value file with window_ns, gather_ns, section_shift_ns, fold,
    /// layers, modes, triggers, signal_lag_ns, workers; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Signal photons per event n' [default 2].
    #[arg(long)]
    fold: Option<usize>,
    /// Trigger multiplicity [default: fold].
    #[arg(long)]
    triggers: Option<usize>,
    /// Sections N [default 2].
    #[arg(long)]
    layers: Option<usize>,
    /// Chip modes m for renumbering [default 15].
    #[arg(long)]
    modes: Option<usize>,
    /// Coincidence window [default 2 ns].
    #[arg(long)]
    window_ns: Option<f64>,
    /// Gather window [default (N-1)*12.5 + 8.5 ns, i.e. 21 ns for N = 2].
    #[arg(long)]
    gather_ns: Option<f64>,
    /// Section shift [default 12.5 ns, one pulse period].
    #[arg(long)]
    section_shift_ns: Option<f64>,
    /// Trigger-to-signal lag [default 5 ns].
    #[arg(long)]
    signal_lag_ns: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    channel_map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    FirstOccurrence,
    MeanInterval,
    Counts,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::FirstOccurrence => Estimator::FirstOccurrence,
            EstimatorArg::MeanInterval => Estimator::MeanInterval,
            EstimatorArg::Counts => Estimator::Counts,
        }
    }
}

#[derive(Args)]
struct ReconstructCmd {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    layers: usize,
    #[arg(long, default_value_t = 15)]
    modes: usize,
    #[arg(long, value_enum, default_value = "mean-interval")]
    estimator: EstimatorArg,
    /// Time origin tick [default: first record of --stream, else 0].
    #[arg(long)]
    origin_tick: Option<u64>,
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Expected distribution; its unseen patterns are reported.
    #[arg(long)]
    expected: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Bar chart of reconstructed vs expected probabilities.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateCmd {
    /// Sample file, one pattern per line.
    #[arg(long, conflicts_with = "events", required_unless_present = "events")]
    samples: Option<PathBuf>,
    /// Event CSV; needs --layers and --modes.
    #[arg(long, requires_all = ["layers", "modes"])]
    events: Option<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    /// Indistinguishable model distribution CSV.
    #[arg(long)]
    p_ind: PathBuf,
    /// Distinguishable model distribution CSV.
    #[arg(long)]
    q_dis: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    a1: f64,
    #[arg(long, default_value_t = 1.5)]
    a2: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct FidelityCmd {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityCmd {
    #[arg(long)]
    layers: usize,
    #[arg(long, default_value_t = 15)]
    modes: usize,
    #[arg(long)]
    fold: usize,
    /// Also write a surface CSV over --layer-grid x --fold-grid.
    #[arg(long)]
    surface_out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
    layer_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,10,20,30,40,50,60")]
    fold_grid: Vec<usize>,
}

#[derive(Args)]
struct ScalingCmd {
    #[arg(long, default_value_t = 8)]
    modes: usize,
    #[arg(long, default_value_t = 0.5)]
    transition: f64,
    /// Total pair probability per pulse, split over the pumped inputs.
    #[arg(long, default_value_t = 0.002)]
    pair_rate: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7")]
    pair_inputs: Vec<usize>,
    #[arg(long, default_value_t = 500_000_000)]
    pulses: u64,
    #[arg(long, default_value_t = 10)]
    partitions: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,500,600,700,800,900,1000")]
    layers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,6,7,8,9,10")]
    folds: Vec<usize>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10,12,14,16,18,20")]
    sizes: Vec<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(create_file(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(open_file(path)?))
}

fn load_map(path: &Option<PathBuf>) -> Result<ChannelMap> {
    path.as_ref().map_or_else(|| Ok(ChannelMap::default()), ChannelMap::load)
}

fn read_patterns(path: &Path) -> Result<Vec<OccupancyPattern>> {
    open(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            l?.trim().parse().map_err(|e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn summary_target(explicit: &Option<PathBuf>, out: Option<&Path>, command: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".summary.json");
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("mbs-{command}.summary.json")),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenUnitary(a) => {
            let u = haar_random_unitary(a.dim, RandomSeed(a.seed))?;
            u.save(&a.out)?;
            let mut s = RunSummary::new("gen-unitary", Some(a.seed), json!({"dim": a.dim}));
            s.outputs.push(a.out.display().to_string());
            s.metrics = json!({"unitarity_deviation": memboson::matrix::unitarity_deviation(&u)?});
            s.write(summary_target(&cli.summary, Some(&a.out), "gen-unitary"))
        }
        Command::BuildNet(a) => {
            let net = LayeredNetwork::haar(a.layers, a.modes, a.transition, RandomSeed(a.seed))?;
            net.save_json(&a.out)?;
            let mut s = RunSummary::new(
                "build-net",
                Some(a.seed),
                json!({"layers": a.layers, "modes": a.modes, "transition": a.transition}),
            );
            s.outputs.push(a.out.display().to_string());
            if let Some(p) = &a.matrix_out {
                build_scattering_matrix(&net).save(p)?;
                s.outputs.push(p.display().to_string());
            }
            if let Some(p) = &a.graph_out {
                let mut w = create(p)?;
                layer_graph(&net).write_edge_list(&mut w)?;
                w.flush()?;
                s.outputs.push(p.display().to_string());
            }
            s.write(summary_target(&cli.summary, Some(&a.out), "build-net"))
        }
        Command::Distribution(a) => {
            let (u, net) = match (&a.net, &a.unitary) {
                (Some(p), _) => {
                    let net = LayeredNetwork::load_json(p)?;
                    (build_scattering_matrix(&net), Some(net))
                }
                (None, Some(p)) => (ComplexMatrix::load(p)?, None),
                (None, None) => return Err(Error::Config("need --net or --unitary".into())),
            };
            let workers = a.workers.unwrap_or_else(default_workers);
            let mut dist = with_pool(workers, || {
                sampling::full_distribution(&u, &a.input, a.stats.into(), a.collision_free)
            })??;
            if a.causal {
                let modes = net.as_ref().expect("clap requires --net").modes();
                dist = dist.restrict(|o| pipeline::satisfies_causality(&a.input, o, modes))?;
            }
            let mut w = create(&a.out)?;
            dist.write_csv(&mut w)?;
            w.flush()?;
            let mut s = RunSummary::new(
                "distribution",
                None,
                json!({
                    "input": a.input.to_string(),
                    "stats": format!("{:?}", Statistics::from(a.stats)),
                    "collision_free": a.collision_free,
                    "causal": a.causal,
                    "workers": workers,
                }),
            );
            s.outputs.push(a.out.display().to_string());
            s.metrics = json!({"patterns": dist.len()});
            s.write(summary_target(&cli.summary, Some(&a.out), "distribution"))
        }
        Command::Sample(a) => {
            let dist = Distribution::read_csv(open(&a.dist)?)?;
            let samples = sampling::draw_samples(&dist, a.count, RandomSeed(a.seed));
            let mut w = create(&a.out)?;
            for p in &samples {
                writeln!(w, "{p}")?;
            }
            w.flush()?;
            let mut s = RunSummary::new("sample", Some(a.seed), json!({"count": a.count}));
            s.outputs.push(a.out.display().to_string());
            s.write(summary_target(&cli.summary, Some(&a.out), "sample"))
        }
        Command::GenEvents(a) => gen_events(a, &cli.summary),
        Command::Calibrate(a) => {
            let map = load_map(&a.channel_map)?;
            let clock = ClockModel::default();
            let records = eventstream::read_stream(&a.stream)?;
            let mut table = pipeline::calibrate_delays(&records, &map, &clock, a.reference)?;
            let mut metrics = json!({"calibrated_channels": table.calibrated});
            if let Some(p) = &a.drift_stream {
                let fit = pipeline::fit_drift(&eventstream::read_stream(p)?, &map, &clock, a.max_interval)?;
                table.signal_drift = fit.signal;
                table.trigger_drift = fit.trigger;
                metrics["drift"] = serde_json::to_value(fit)?;
            }
            table.save_json(&a.out)?;
            let mut s = RunSummary::new(
                "calibrate",
                None,
                json!({"reference": a.reference, "max_interval": a.max_interval}),
            );
            s.outputs.push(a.out.display().to_string());
            s.metrics = metrics;
            s.write(summary_target(&cli.summary, Some(&a.out), "calibrate"))
        }
        Command::Extract(a) => extract(a, &cli.summary),
        Command::Reconstruct(a) => {
            let events = pipeline::read_events_csv(open(&a.events)?)?;
            let origin = match (a.origin_tick, &a.stream) {
                (Some(t), _) => t,
                (None, Some(p)) => eventstream::read_stream(p)?.first().map_or(0, |r| r.tick),
                (None, None) => 0,
            };
            let expected = a
                .expected
                .as_ref()
                .map(|p| Distribution::read_csv(open(p)?))
                .transpose()?;
            let global = a.layers * a.modes;
            let rec = analysis::reconstruct_from_timestamps(
                &events,
                global,
                a.estimator.into(),
                origin,
                expected.as_ref().map_or(&[][..], |d| d.patterns()),
            )?;
            let mut w = create(&a.out)?;
            rec.distribution.write_csv(&mut w)?;
            w.flush()?;
            for p in &rec.excluded {
                eprintln!("excluded pattern with no events: {p}");
            }
            let mut s = RunSummary::new(
                "reconstruct",
                None,
                json!({"layers": a.layers, "modes": a.modes, "estimator": Estimator::from(a.estimator), "origin_tick": origin}),
            );
            s.outputs.push(a.out.display().to_string());
            let mut metrics = json!({
                "events": events.len(),
                "patterns": rec.distribution.len(),
                "excluded": rec.excluded.iter().map(ToString::to_string).collect::<Vec<_>>(),
            });
            if let Some(exp) = &expected {
                metrics["fidelity"] = json!(analysis::fidelity(&rec.distribution, exp)?);
                if let Some(p) = &a.svg {
                    let labels: Vec<String> = exp.patterns().iter().map(ToString::to_string).collect();
                    let theory = exp.probs().to_vec();
                    let measured = exp.patterns().iter().map(|p| rec.distribution.prob(p)).collect();
                    std::fs::write(
                        p,
                        svg::bar_chart("reconstructed vs expected", &labels, &[("expected", theory), ("reconstructed", measured)]),
                    )?;
                    s.outputs.push(p.display().to_string());
                }
            }
            s.metrics = metrics;
            s.write(summary_target(&cli.summary, Some(&a.out), "reconstruct"))
        }
        Command::Validate(a) => {
            let patterns = match (&a.samples, &a.events) {
                (Some(p), _) => read_patterns(p)?,
                (None, Some(p)) => {
                    let global = a.layers.expect("clap requires") * a.modes.expect("clap requires");
                    pipeline::read_events_csv(open(p)?)?
                        .iter()
                        .map(|e| e.output_pattern(global))
                        .collect::<Result<_>>()?
                }
                (None, None) => return Err(Error::Config("need --samples or --events".into())),
            };
            let p = Distribution::read_csv(open(&a.p_ind)?)?;
            let q = Distribution::read_csv(open(&a.q_dis)?)?;
            let trace = analysis::likelihood_ratio_validate(&patterns, &p, &q, a.a1, a.a2)?;
            let mut w = create(&a.out)?;
            trace.write_csv(&mut w)?;
            w.flush()?;
            println!("final counter {} after {} events", trace.final_value(), trace.counter.len());
            let mut s = RunSummary::new("validate", None, json!({"a1": a.a1, "a2": a.a2}));
            s.outputs.push(a.out.display().to_string());
            if let Some(path) = &a.svg {
                std::fs::write(path, svg::trace_plot("likelihood-ratio counter", &[("C", &trace.counter)]))?;
                s.outputs.push(path.display().to_string());
            }
            s.metrics = json!({"events": trace.counter.len(), "final_counter": trace.final_value()});
            s.write(summary_target(&cli.summary, Some(&a.out), "validate"))
        }
        Command::Fidelity(a) => {
            let da = Distribution::read_csv(open(&a.a)?)?;
            let db = Distribution::read_csv(open(&a.b)?)?;
            let f = analysis::fidelity(&da, &db)?;
            println!("{f:.6}");
            let mut s = RunSummary::new(
                "fidelity",
                None,
                json!({"a": a.a.display().to_string(), "b": a.b.display().to_string()}),
            );
            if let Some(p) = &a.svg {
                let mut labels: Vec<OccupancyPattern> = da.patterns().to_vec();
                labels.extend(db.patterns().iter().filter(|x| !da.contains(x)).cloned());
                let sa = labels.iter().map(|x| da.prob(x)).collect();
                let sb = labels.iter().map(|x| db.prob(x)).collect();
                let names: Vec<String> = labels.iter().map(ToString::to_string).collect();
                std::fs::write(p, svg::bar_chart(&format!("fidelity {f:.4}"), &names, &[("a", sa), ("b", sb)]))?;
                s.outputs.push(p.display().to_string());
            }
            s.metrics = json!({"fidelity": f});
            s.write(summary_target(&cli.summary, None, "fidelity"))
        }
        Command::Complexity(a) => {
            let m = analysis::complexity_metrics(a.layers, a.modes, a.fold)?;
            println!("log10_combinations {:.3}", m.log10_combinations);
            println!("log10_hilbert {:.3}", m.log10_hilbert);
            let mut s = RunSummary::new(
                "complexity",
                None,
                json!({"layers": a.layers, "modes": a.modes, "fold": a.fold}),
            );
            if let Some(p) = &a.surface_out {
                let rows = analysis::complexity_surface(&a.layer_grid, a.modes, &a.fold_grid)?;
                let mut w = create(p)?;
                analysis::write_complexity_csv(&rows, &mut w)?;
                w.flush()?;
                s.outputs.push(p.display().to_string());
            }
            s.metrics = serde_json::to_value(m)?;
            s.write(summary_target(&cli.summary, a.surface_out.as_deref(), "complexity"))
        }
        Command::Scaling(a) => {
            if a.pair_inputs.is_empty() {
                return Err(Error::Config("--pair-inputs must list at least one input".into()));
            }
            let cfg = ScalingConfig {
                modes: a.modes,
                transition: a.transition,
                pair_probability: a.pair_rate / a.pair_inputs.len() as f64,
                input_modes: a.pair_inputs.clone(),
                duration_pulses: a.pulses,
                partitions: a.partitions,
                layer_values: a.layers.clone(),
                fold_values: a.folds.clone(),
                seed: RandomSeed(a.seed),
            };
            let workers = a.workers.unwrap_or_else(default_workers);
            let rows = with_pool(workers, || analysis::scaling_study(&cfg))??;
            let mut w = create(&a.out)?;
            analysis::write_scaling_csv(&rows, &mut w)?;
            w.flush()?;
            let mut s = RunSummary::new("scaling", Some(a.seed), serde_json::to_value(&cfg)?);
            s.outputs.push(a.out.display().to_string());
            s.metrics = json!({"grid_points": rows.len(), "workers": workers});
            s.write(summary_target(&cli.summary, Some(&a.out), "scaling"))
        }
        Command::BenchPermanent(a) => {
            let workers = a.workers.unwrap_or_else(default_workers);
            let rows = permanent::benchmark(&a.sizes, workers, RandomSeed(a.seed))?;
            let mut w = create(&a.out)?;
            permanent::write_bench_csv(&rows, &mut w)?;
            w.flush()?;
            let mut s = RunSummary::new("bench-permanent", Some(a.seed), json!({"sizes": a.sizes, "workers": workers}));
            s.outputs.push(a.out.display().to_string());
            s.metrics = serde_json::to_value(&rows)?;
            s.write(summary_target(&cli.summary, Some(&a.out), "bench-permanent"))
        }
    }
}

fn gen_events(a: GenEvents, summary: &Option<PathBuf>) -> Result<()> {
    let map = load_map(&a.channel_map)?;
    let clock = if a.published_drift {
        ClockModel::with_published_drift()
    } else {
        ClockModel::default()
    };
    let mut noise: NoiseModel = match &a.noise {
        Some(p) => serde_json::from_reader(open(p)?)?,
        None => NoiseModel::default(),
    };
    if let Some(j) = a.jitter_ps {
        noise.jitter_sigma_ps = j;
    }
    if let Some(r) = a.dark_rate_hz {
        for c in map.channels_with(eventstream::ChannelRole::Signal).chain(map.channels_with(eventstream::ChannelRole::Trigger)) {
            noise.dark_rate_hz[c as usize] = r;
        }
    }
    if let Some(e) = a.efficiency {
        noise.efficiency = vec![e; CHANNELS];
    }
    for &(c, d) in &a.delay {
        noise.delay_ns[c as usize] = d;
    }
    if let Some(x) = a.extra_pair_probability {
        noise.extra_pair_probability = x;
    }
    let seed = RandomSeed(a.seed);
    let config = StreamConfig {
        channel_map: map.clone(),
        ..StreamConfig::new(a.pulses)
    };
    let need_net = || -> Result<LayeredNetwork> {
        let p = a.net.as_ref().ok_or_else(|| Error::Config("--net is required for this source".into()))?;
        LayeredNetwork::load_json(p)
    };
    let stream = match a.source {
        SourceArg::Patterns => {
            let net = need_net()?;
            let input = a.input.clone().ok_or_else(|| Error::Config("--input is required".into()))?;
            let dist_path = a.dist.as_ref().ok_or_else(|| Error::Config("--dist is required".into()))?;
            let dist = Distribution::read_csv(open(dist_path)?)?;
            let src = Source::Patterns {
                input: &input,
                dist: &dist,
                fire_probability: a.fire_probability,
            };
            eventstream::generate_stream(&net, src, &clock, &noise, &config, seed)?
        }
        SourceArg::Pairs => {
            let net = need_net()?;
            let src = Source::Pairs {
                input_modes: &a.pair_inputs,
                pair_probability: a.pair_probability,
            };
            eventstream::generate_stream(&net, src, &clock, &noise, &config, seed)?
        }
        SourceArg::DriftProbes => {
            let trig = map.trigger_channel(0).ok_or_else(|| Error::Config("no trigger channel".into()))?;
            let sig = map.signal_channel(0).ok_or_else(|| Error::Config("no signal channel".into()))?;
            eventstream::generate_drift_probes(&clock, &noise, a.max_interval, a.probes, trig, sig, seed)?
        }
    };
    eventstream::write_stream(&a.out, &stream.records)?;
    let mut s = RunSummary::new(
        "gen-events",
        Some(a.seed),
        json!({
            "pulses": a.pulses,
            "fire_probability": a.fire_probability,
            "clock": clock,
            "noise": noise,
        }),
    );
    s.outputs.push(a.out.display().to_string());
    if let Some(p) = &a.truth_out {
        let mut w = create(p)?;
        writeln!(w, "first_pulse,input,output,complete,contaminated")?;
        for t in &stream.truth {
            writeln!(w, "{},{},{},{},{}", t.first_pulse, t.input, t.output, t.complete, t.contaminated)?;
        }
        w.flush()?;
        s.outputs.push(p.display().to_string());
    }
    s.metrics = json!({
        "records": stream.records.len(),
        "events": stream.truth.len(),
        "start_tick": stream.start_tick,
        "end_tick": stream.end_tick,
    });
    s.write(summary_target(summary, Some(&a.out), "gen-events"))
}

const EXTRACT_KEYS: [&str; 9] = [
    "window_ns",
    "gather_ns",
    "section_shift_ns",
    "fold",
    "layers",
    "modes",
    "triggers",
    "signal_lag_ns",
    "workers",
];

fn extract(a: ExtractCmd, summary: &Option<PathBuf>) -> Result<()> {
    let cfg = a.config.as_ref().map(KeyValueConfig::load).transpose()?;
    if let Some(c) = &cfg {
        c.check_known(&EXTRACT_KEYS)?;
    }
    let c = cfg.as_ref();
    let defaults = ExtractParams::new(2, 2, 15);
    let mut params = ExtractParams {
        fold: layered(a.fold, c, "fold", defaults.fold)?,
        layers: layered(a.layers, c, "layers", defaults.layers)?,
        modes: layered(a.modes, c, "modes", defaults.modes)?,
        window_ns: layered(a.window_ns, c, "window_ns", defaults.window_ns)?,
        section_shift_ns: layered(a.section_shift_ns, c, "section_shift_ns", defaults.section_shift_ns)?,
        signal_lag_ns: layered(a.signal_lag_ns, c, "signal_lag_ns", defaults.signal_lag_ns)?,
        ..defaults
    };
    params.triggers = match a.triggers {
        Some(t) => Some(t),
        None => c.map(|c| c.get("triggers")).transpose()?.flatten(),
    };
    params.gather_ns = match a.gather_ns {
        Some(g) => Some(g),
        None => c.map(|c| c.get("gather_ns")).transpose()?.flatten(),
    };
    let workers = layered(a.workers, c, "workers", default_workers())?;
    params.validate()?;
    let map = load_map(&a.channel_map)?;
    let table = a
        .calibration
        .as_ref()
        .map(CalibrationTable::load_json)
        .transpose()?
        .unwrap_or_default();
    let (events, stats) = pipeline::process_chunked(&a.stream, &map, &table, &params, workers, None)?;
    let mut w = create(&a.out)?;
    pipeline::write_events_csv(&events, &mut w)?;
    w.flush()?;
    eprintln!(
        "{} events from {} records, {:.3e} records/s, workers: {}",
        stats.events, stats.records, stats.records_per_second, stats.workers
    );
    let mut s = RunSummary::new("extract", None, serde_json::to_value(&params)?);
    s.outputs.push(a.out.display().to_string());
    s.metrics = json!({
        "events": stats.events,
        "records": stats.records,
        "workers": stats.workers,
        "seconds": stats.seconds,
        "records_per_second": stats.records_per_second,
        "gather_ns": params.effective_gather_ns(&table),
    });
    s.write(summary_target(summary, Some(&a.out), "extract"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 4,
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::InvalidDimension(_)
        | Error::InvalidPattern(_)
        | Error::SizeLimit { .. } => 3,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => "missing_file",
        Error::Io(_) => "io",
        Error::Config(_) => "config",
        Error::InvalidArgument(_) | Error::InvalidDimension(_) | Error::InvalidPattern(_) | Error::SizeLimit { .. } => {
            "invalid_argument"
        }
        Error::BadMagic(_) | Error::Truncated { .. } | Error::UnsortedTicks { .. } | Error::ChannelRange(_) | Error::Parse { .. } => {
            "parse"
        }
        _ => "runtime",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!(
                "{}",
                json!({"error": error_kind(&e), "message": e.to_string(), "exit_code": code})
            );
            ExitCode::from(code)
        }
    }
}
