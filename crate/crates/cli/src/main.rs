//! `cardtrack`: generate layouts, render synthetic scenes, track, calibrate,
//! replay two-player sessions and benchmark the tracker.
//!
//! Machine-readable output goes to `--out` (or stdout); summaries go to stderr.
//! Exit status: 0 on success, 1 on usage or I/O errors, 2 when the run itself
//! fails (calibration failure, replica divergence).

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cardtrack::bench::{run_bench, synthetic_frame};
use cardtrack::calibration::{calibrate_scene, save_calibration};
use cardtrack::game::{read_events, scripted_war, write_events, GameState, PileId};
use cardtrack::geometry::{CameraIntrinsics, Pose};
use cardtrack::observation::{read_trace, write_trace, TraceItem};
use cardtrack::player::PlayerId;
use cardtrack::pose::SolverKind;
use cardtrack::registry::{load_layout, save_layout, Registry, BOARD_TAGS, TAGS_PER_DECK, TAG_BUDGET};
use cardtrack::scene::{parse_scene_script, simulate_trace, NoiseModel};
use cardtrack::sync::{simulate_session, ChannelConfig, SessionConfig};
use cardtrack::tracker::{
    jitter_metrics, lifecycle_apply, track_frame, write_card_poses, CardPoseEstimate, TrackerLifecycle,
};

/// Default intrinsics file when `--intrinsics` is not given.
const INTRINSICS_ENV: &str = "CARDTRACK_INTRINSICS";

#[derive(Parser)]
#[command(name = "cardtrack", version, about = "Planar fiducial card tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write deck and board marker layouts.
    GenLayout(GenLayoutArgs),
    /// Render a scene script into an observation trace.
    Simulate(SimulateArgs),
    /// Estimate card poses from an observation trace.
    Track(TrackArgs),
    /// Fit the table plane and deck anchor from one frame.
    Calibrate(CalibrateArgs),
    /// Replay a two-player War session over a simulated channel.
    Play(PlayArgs),
    /// Measure tracker throughput on synthetic frames.
    Bench(BenchArgs),
    /// Write the scripted War hand-event traces used by `play`.
    ScriptWar(ScriptWarArgs),
}

#[derive(Args)]
struct GenLayoutArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Only this player's deck plus the board.
    #[arg(long)]
    player: Option<PlayerId>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Probability of hiding each visible tag.
    #[arg(long, default_value_t = 0.0)]
    occlude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    #[arg(long, default_value = "ippe")]
    solver: SolverKind,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict tracking to one player's deck plus the board.
    #[arg(long)]
    player: Option<PlayerId>,
    /// Jitter window in frames.
    #[arg(long, default_value_t = 30)]
    window: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Observation trace; its first frame is used.
    #[arg(long)]
    obs_frame: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Camera pose in the headset frame: `tx ty tz rx ry rz`.
    #[arg(long)]
    extrinsic: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    player: Option<PlayerId>,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Player A hand events; the scripted War game when omitted.
    #[arg(long)]
    events_a: Option<PathBuf>,
    #[arg(long)]
    events_b: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    latency: f64,
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corrupt the guest replica after this many events.
    #[arg(long)]
    inject_fault: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 3000)]
    tags: usize,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    /// `ippe`, `dlt`, `lm` or `all`.
    #[arg(long, default_value = "all")]
    solver: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScriptWarArgs {
    #[arg(long)]
    out_a: PathBuf,
    #[arg(long)]
    out_b: PathBuf,
}

/// A failure of the run itself rather than of its inputs.
#[derive(Debug)]
struct SemanticFailure(String);

impl std::fmt::Display for SemanticFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SemanticFailure {}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn read_numbers(path: &Path, count: usize) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for line in open(path)?.lines() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .with_context(|| format!("{}: bad number '{tok}'", path.display()))?,
            );
        }
    }
    if values.len() != count {
        bail!("{}: expected {count} numbers, found {}", path.display(), values.len());
    }
    Ok(values)
}

fn intrinsics(path: &Option<PathBuf>) -> Result<CameraIntrinsics> {
    let path = path
        .clone()
        .or_else(|| std::env::var_os(INTRINSICS_ENV).map(PathBuf::from));
    match path {
        None => Ok(CameraIntrinsics::default()),
        Some(p) => {
            let v = read_numbers(&p, 4)?;
            CameraIntrinsics::new(v[0], v[1], v[2], v[3]).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
    }
}

fn load_registry(path: &Path, player: Option<PlayerId>) -> Result<Registry> {
    let reg = load_layout(open(path)?).with_context(|| format!("loading layout {}", path.display()))?;
    match player {
        Some(p) => Ok(reg.restrict_to(p)?),
        None => Ok(reg),
    }
}

fn gen_layout(args: GenLayoutArgs) -> Result<()> {
    let reg = match args.player {
        Some(p) => Registry::local(args.seed, p),
        None => Registry::full(args.seed),
    };
    save_layout(&reg, create(&args.out)?).with_context(|| format!("writing {}", args.out.display()))?;
    for d in reg.decks() {
        eprintln!("deck {}: {} tags", d.owner, d.tags.len());
        debug_assert_eq!(d.tags.len(), TAGS_PER_DECK);
    }
    if let Some(b) = reg.board() {
        eprintln!("board: {} tags", b.tags.len());
        debug_assert_eq!(b.tags.len(), BOARD_TAGS);
    }
    let mut ids: Vec<u32> = reg.tags().iter().map(|t| t.tag_id).collect();
    ids.sort_unstable();
    ids.dedup();
    eprintln!("total: {} tags, {} unique ids", reg.len(), ids.len());
    for p in PlayerId::BOTH {
        if reg.deck(p).is_some() {
            let local = reg.restrict_to(p)?.len();
            eprintln!("player {p} registry: {local} tags (budget {TAG_BUDGET})");
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    if !(args.noise_sigma >= 0.0) {
        bail!("--noise-sigma must be >= 0");
    }
    if !(0.0..=1.0).contains(&args.occlude) {
        bail!("--occlude must be a probability");
    }
    let script = parse_scene_script(open(&args.scene)?).with_context(|| format!("in {}", args.scene.display()))?;
    let k = intrinsics(&args.intrinsics)?;
    let registry = match &args.layout {
        Some(p) => load_registry(p, None)?,
        None => Registry::full(0),
    };
    let noise = NoiseModel {
        corner_sigma: args.noise_sigma,
        hide_probability: args.occlude,
        seed: args.seed,
        ..NoiseModel::default()
    };
    let items = simulate_trace(&script, &k, &registry, &noise);
    let frames = items.iter().filter(|i| matches!(i, TraceItem::Frame(_))).count();
    write_trace(&items, output(&args.out)?)?;
    eprintln!("{frames} frames");
    Ok(())
}

fn track(args: TrackArgs) -> Result<()> {
    let registry = load_registry(&args.layout, args.player)?;
    let k = intrinsics(&args.intrinsics)?;
    let items = read_trace(open(&args.obs)?).with_context(|| format!("in {}", args.obs.display()))?;
    let mut lifecycle = TrackerLifecycle::default();
    let mut history: Vec<CardPoseEstimate> = Vec::new();
    let mut frames = 0usize;
    let mut skipped = 0usize;
    let start = Instant::now();
    for item in &items {
        match item {
            TraceItem::Event { event, .. } => lifecycle = lifecycle_apply(lifecycle, *event),
            TraceItem::Frame(frame) => {
                let r = track_frame(&lifecycle, frame, &registry, &k, args.solver);
                frames += 1;
                skipped += r.skipped;
                history.extend(r.cards);
                history.extend(r.board);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    write_card_poses(&history, output(&args.out)?)?;
    eprintln!(
        "{frames} frames, {} pose rows, {skipped} skipped observations, {:.1} frames/s",
        history.len(),
        if elapsed > 0.0 { frames as f64 / elapsed } else { f64::INFINITY }
    );
    if args.window >= 2 {
        let report = jitter_metrics(&history, args.window)?;
        for j in &report.cards {
            eprintln!(
                "jitter {}: n={} pos={:.6} m rot={:.4} deg{}",
                j.card,
                j.samples,
                j.positional_sigma,
                j.rotational_sigma_deg,
                if j.flagged { " FLAG" } else { "" }
            );
        }
    }
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let registry = load_registry(&args.layout, args.player)?;
    let k = intrinsics(&args.intrinsics)?;
    let extrinsic = match &args.extrinsic {
        None => Pose::identity(),
        Some(p) => {
            let v = read_numbers(p, 6)?;
            Pose::from_rodrigues(
                nalgebra::Vector3::new(v[3], v[4], v[5]),
                nalgebra::Vector3::new(v[0], v[1], v[2]),
            )
        }
    };
    let items = read_trace(open(&args.obs_frame)?).with_context(|| format!("in {}", args.obs_frame.display()))?;
    let frame = items
        .iter()
        .find_map(|i| match i {
            TraceItem::Frame(f) => Some(f.clone()),
            _ => None,
        })
        .ok_or_else(|| anyhow!("{}: no frames", args.obs_frame.display()))?;
    let cal = calibrate_scene(&frame, &registry, &k, &extrinsic).map_err(|e| SemanticFailure(e.to_string()))?;
    save_calibration(&cal, output(&args.out)?)?;
    eprintln!(
        "table offset {:.6} m, plane residual {:.2e} m, deck {} at ({:.4}, {:.4}) heading {:.4} rad",
        cal.table.offset,
        cal.table.residual_rms,
        cal.deck_anchor.card,
        cal.deck_anchor.u,
        cal.deck_anchor.w,
        cal.deck_anchor.heading
    );
    Ok(())
}

fn scores(g: &GameState) -> String {
    format!(
        "score a={} b={} pot={} battles={}",
        g.score(PlayerId::A),
        g.score(PlayerId::B),
        g.pile(PileId::Pot).len(),
        g.battles
    )
}

fn play(args: PlayArgs) -> Result<()> {
    let (script_a, script_b) = scripted_war();
    let events_a = match &args.events_a {
        Some(p) => read_events(open(p)?).with_context(|| format!("in {}", p.display()))?,
        None => script_a,
    };
    let events_b = match &args.events_b {
        Some(p) => read_events(open(p)?).with_context(|| format!("in {}", p.display()))?,
        None => script_b,
    };
    let channel = ChannelConfig {
        latency: args.latency,
        drop_probability: args.drop,
        seed: args.seed,
        reliable: true,
    };
    channel.validate().map_err(|e| anyhow!(e))?;
    let config = SessionConfig {
        game_seed: args.seed,
        channel,
        fault_after: args.inject_fault,
        ..SessionConfig::default()
    };
    let report = simulate_session(&events_a, &events_b, &config);
    let mut out = output(&args.out)?;
    for r in &report.transcript {
        writeln!(out, "{r}")?;
    }
    for (p, g) in PlayerId::BOTH.iter().zip(&report.replicas) {
        writeln!(out, "final {p}")?;
        out.write_all(g.canonical_dump().as_bytes())?;
    }
    out.flush()?;
    for (p, g) in PlayerId::BOTH.iter().zip(&report.replicas) {
        let total = g.score(PlayerId::A) + g.score(PlayerId::B) + g.pile(PileId::Pot).len();
        eprintln!("replica {p}: {} (cards in score piles and pot: {total})", scores(g));
    }
    eprintln!(
        "{} messages, {} retransmissions, {} acks, {} dropped, quiescent at t={:.2}",
        report.messages, report.retransmissions, report.acks, report.dropped, report.end_time
    );
    if !report.converged || report.divergence_detected {
        return Err(SemanticFailure("replicas diverged".into()).into());
    }
    eprintln!("converged");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let solvers: Vec<SolverKind> = if args.solver == "all" {
        SolverKind::ALL.to_vec()
    } else {
        vec![args.solver.parse().map_err(|e: String| anyhow!(e))?]
    };
    let registry = Registry::full(args.seed);
    let k = CameraIntrinsics::default();
    let frame = synthetic_frame(&registry, &k, args.tags, args.seed);
    println!("solver tags frames median_ms p95_ms mean_ms fps");
    for s in solvers {
        let st = run_bench(&registry, &k, &frame, args.frames, s);
        println!(
            "{} {} {} {:.3} {:.3} {:.3} {:.1}",
            s, st.tags, st.frames, st.median_ms, st.p95_ms, st.mean_ms, st.fps()
        );
    }
    let single = synthetic_frame(&registry, &k, 1, args.seed);
    let st = run_bench(&registry, &k, &single, 1000, SolverKind::Ippe);
    eprintln!("single-tag ippe frame: {:.4} ms median", st.median_ms);
    Ok(())
}

fn script_war(args: ScriptWarArgs) -> Result<()> {
    let (a, b) = scripted_war();
    write_events(&a, create(&args.out_a)?)?;
    write_events(&b, create(&args.out_b)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenLayout(a) => gen_layout(a),
        Command::Simulate(a) => simulate(a),
        Command::Track(a) => track(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Play(a) => play(a),
        Command::Bench(a) => bench(a),
        Command::ScriptWar(a) => script_war(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SemanticFailure>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

