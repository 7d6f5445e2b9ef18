//! `canpath` command-line front end.

mod files;

use std::fmt;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use canpath::canlog::{filter_frames, read_log, write_log};
use canpath::mapmatch::{ExternalMatcher, InternalMatcher, PassthroughMatcher, MATCHER_URL_ENV};
use canpath::obd::decode_speed_response;
use canpath::reveng::{
    compute_change_stats, decode_angle, format_candidate_report, lookup_in, lookup_known_swa, parse_sheet,
    rank_swa_candidates, SheetEntry,
};
use canpath::synthgen::{simulate, suite, SimScenario, SpeedSegment};
use canpath::trackeval::{
    compare_tracks, comparison_csv_row, read_gpx, write_gpx, AlignParams, CompareOptions, Track,
    COMPARISON_CSV_HEADER,
};
use canpath::tuner::{grid_search, Grids, TuneTrack};
use canpath::{
    infer_path, AngleDecoder, CanFrame, IdFilter, InferenceParams, LatLon, Matcher, MatcherConfig, RoadGraph,
    Timestamp, VehiclePose, VehicleSpec,
};
use clap::{Parser, Subcommand};

use files::{parent_dir, resolve, Manifest, ScenarioFile, TrackEntry};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(PathBuf, io::Error),
    Input(String),
    Run(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error[usage]: {m}"),
            CliError::Io(p, e) => write!(f, "error[io]: {}: {e}", p.display()),
            CliError::Input(m) => write!(f, "error[input]: {m}"),
            CliError::Run(m) => write!(f, "error[runtime]: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Clone, Copy)]
struct StartArg(VehiclePose);

impl FromStr for StartArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("not a number: {p:?}")))
            .collect::<std::result::Result<_, _>>()?;
        let [lat, lon, bearing] = parts[..] else {
            return Err("expected lat,lon,bearing".into());
        };
        if !LatLon::new(lat, lon).is_valid() || !bearing.is_finite() {
            return Err("coordinates out of range".into());
        }
        Ok(StartArg(VehiclePose::new(lat, lon, bearing)))
    }
}

fn parse_hex_id(s: &str) -> std::result::Result<u16, String> {
    let t = s.trim_start_matches("0x").trim_start_matches("0X");
    match u16::from_str_radix(t, 16) {
        Ok(v) if v <= 0x7FF => Ok(v),
        _ => Err(format!("not an 11-bit hex CAN id: {s}")),
    }
}

/// `key=value,...` overrides on top of the defaults.
fn parse_params(s: &str) -> std::result::Result<InferenceParams, String> {
    let mut p = InferenceParams::default();
    for kv in s.split(',').filter(|kv| !kv.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got {kv:?}"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad value for {k}: {v}"));
        match k.trim() {
            "t_window" => p.t_window = num(v)?,
            "speed_max" | "speed_min" => p.speed_max = num(v)?,
            "steer_max" => p.steer_max = num(v)?,
            "max_interpolation_points" | "max_interp" => {
                p.max_interpolation_points = v.trim().parse().map_err(|_| format!("bad value for {k}: {v}"))?
            }
            other => return Err(format!("unknown parameter {other}")),
        }
    }
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

#[derive(Debug, Clone)]
enum MatcherArg {
    Internal(PathBuf),
    External(Option<String>),
    None,
}

impl FromStr for MatcherArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            return Ok(MatcherArg::None);
        }
        if s == "external" {
            return Ok(MatcherArg::External(None));
        }
        match s.split_once(':') {
            Some(("internal", p)) if !p.is_empty() => Ok(MatcherArg::Internal(PathBuf::from(p))),
            Some(("external", u)) if !u.is_empty() => Ok(MatcherArg::External(Some(u.to_string()))),
            _ => Err("expected internal:<graph>, external[:<url>] or none".into()),
        }
    }
}

#[derive(Parser)]
#[command(name = "canpath", version, about = "Reconstruct driven paths from CAN steering and OBD speed logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct VehicleArgs {
    /// Vehicle model as listed on the decoder sheet.
    #[arg(long)]
    model: Option<String>,
    /// Decoder sheet to use instead of the shipped one.
    #[arg(long)]
    decoder_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rank steering-angle candidate IDs by bit-change smoothness.
    Rewheel {
        log: PathBuf,
        /// Only IDs below this hex value are considered.
        #[arg(long, default_value = "300", value_parser = parse_hex_id)]
        id_ceiling: u16,
        /// Report every ID instead of the ranked candidates.
        #[arg(long)]
        all: bool,
    },
    /// Print the decoded steering angle and speed time series as CSV.
    Decode {
        log: PathBuf,
        #[command(flatten)]
        vehicle: VehicleArgs,
    },
    /// Keep only OBD responses and the steering-angle ID.
    Logfilter {
        log: PathBuf,
        #[arg(long, value_parser = parse_hex_id)]
        swa_id: u16,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Infer the driven path as GPX.
    Infer {
        log: PathBuf,
        /// Starting point and heading: lat,lon,bearing
        #[arg(long, value_name = "LAT,LON,BEARING", allow_hyphen_values = true)]
        start: StartArg,
        #[command(flatten)]
        vehicle: VehicleArgs,
        /// Wheelbase in meters; required for models without a known value.
        #[arg(long)]
        wheelbase: Option<f64>,
        /// Overrides such as t_window=0.1,speed_max=50,steer_max=35,max_interpolation_points=30
        #[arg(long, value_parser = parse_params)]
        params: Option<InferenceParams>,
        /// internal:<graph>, external[:<url>] or none
        #[arg(long)]
        matcher: Option<MatcherArg>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Write the run diagnostics to this file.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Align two GPX tracks and print the accuracy row.
    Compare {
        inferred: PathBuf,
        truth: PathBuf,
        /// Match distance in meters.
        #[arg(long, default_value_t = 10.0)]
        epsilon: f64,
        /// Resampling step in meters before alignment; 0 aligns raw points.
        #[arg(long, default_value_t = 5.0)]
        spacing: f64,
    },
    /// Simulate a drive and write the CAN log, truth GPX and a manifest.
    Synth {
        #[arg(required_unless_present = "builtin")]
        scenario: Option<PathBuf>,
        /// Use a built-in scenario instead of a scenario file.
        #[arg(long, conflicts_with = "scenario")]
        builtin: Option<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Grid-search the inference parameters over the tracks of a manifest.
    Tune {
        manifest: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Write per-parameter curves with the others fixed at the best combination.
        #[arg(long)]
        marginals: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_text(p, text),
        None => match io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Io(PathBuf::from("<stdout>"), e)),
            _ => Ok(()),
        },
    }
}

fn load_log(path: &Path) -> Result<Vec<CanFrame>> {
    let file = fs::File::open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let parsed = read_log(BufReader::new(file), false).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if !parsed.skipped.is_empty() {
        eprintln!("warning: {}: skipped {} malformed lines", path.display(), parsed.skipped.len());
    }
    Ok(parsed.frames)
}

fn load_graph(path: &Path) -> Result<Arc<RoadGraph>> {
    let text = read_text(path)?;
    RoadGraph::parse(&text)
        .map(Arc::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_track(path: &Path) -> Result<Track> {
    read_gpx(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Finds the decoder entry. Flags are checked before the sheet file is read.
fn resolve_entry(model: Option<&str>, decoder_file: Option<&Path>) -> Result<SheetEntry> {
    let Some(path) = decoder_file else {
        let Some(model) = model else {
            return usage("missing --model or --decoder-file");
        };
        return lookup_known_swa(model).map_or_else(
            || usage(format!("unknown model {model:?}: pass --decoder-file and --wheelbase")),
            Ok,
        );
    };
    let sheet = parse_sheet(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    match model {
        Some(m) => lookup_in(&sheet, m)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("model {m:?} not in {}", path.display()))),
        None if sheet.len() == 1 => Ok(sheet[0].clone()),
        None => usage(format!("{} lists several models: pass --model", path.display())),
    }
}

fn resolve_vehicle(
    model: Option<&str>,
    decoder_file: Option<&Path>,
    wheelbase: Option<f64>,
) -> Result<(AngleDecoder, VehicleSpec)> {
    if wheelbase.is_some_and(|w| !(w > 0.0 && w.is_finite())) {
        return usage("--wheelbase must be positive");
    }
    let entry = resolve_entry(model, decoder_file)?;
    let Some(wb) = wheelbase.or(entry.wheelbase) else {
        return usage(format!("no wheelbase known for {:?}: pass --wheelbase", entry.model));
    };
    Ok((entry.decoder, VehicleSpec::new(entry.model, wb)))
}

fn build_matcher(arg: Option<MatcherArg>, base: &Path) -> Result<Arc<dyn Matcher>> {
    let env_url = std::env::var(MATCHER_URL_ENV).ok().filter(|u| !u.is_empty());
    let arg = match arg {
        Some(a) => a,
        None if env_url.is_some() => MatcherArg::External(None),
        None => return usage(format!("missing --matcher (or set {MATCHER_URL_ENV})")),
    };
    Ok(match arg {
        MatcherArg::None => Arc::new(PassthroughMatcher),
        MatcherArg::Internal(p) => {
            Arc::new(InternalMatcher::new(load_graph(&resolve(base, &p))?, MatcherConfig::default()))
        }
        MatcherArg::External(url) => {
            let Some(url) = url.or(env_url) else {
                return usage(format!("external matcher needs a URL or {MATCHER_URL_ENV}"));
            };
            Arc::new(ExternalMatcher::new(url, MatcherConfig::default()))
        }
    })
}

fn cmd_rewheel(log: &Path, id_ceiling: u16, all: bool) -> Result<()> {
    let frames = load_log(log)?;
    let stats = compute_change_stats(&frames);
    let shown = if all { stats } else { rank_swa_candidates(&stats, id_ceiling) };
    emit(None, &format_candidate_report(&shown))
}

fn cmd_decode(log: &Path, vehicle: &VehicleArgs) -> Result<()> {
    let entry = resolve_entry(vehicle.model.as_deref(), vehicle.decoder_file.as_deref())?;
    let frames = load_log(log)?;
    let mut out = String::from("timestamp,signal,value\n");
    for f in &frames {
        if f.id == entry.decoder.id {
            if let Ok(s) = decode_angle(&entry.decoder, f) {
                out += &format!("{},angle_deg,{}\n", f.timestamp, s.angle);
            }
        } else if let Some(r) = decode_speed_response(f) {
            out += &format!("{},speed_kmh,{}\n", f.timestamp, r.speed_kmh);
        }
    }
    emit(None, &out)
}

fn cmd_logfilter(log: &Path, swa_id: u16, output: Option<&Path>) -> Result<()> {
    let frames = load_log(log)?;
    let kept = filter_frames(&frames, &IdFilter::collection(swa_id));
    let mut buf = Vec::new();
    write_log(&mut buf, &kept).map_err(|e| CliError::Run(e.to_string()))?;
    emit(output, &String::from_utf8_lossy(&buf))
}

#[allow(clippy::too_many_arguments)]
fn cmd_infer(
    log: &Path,
    start: VehiclePose,
    vehicle: &VehicleArgs,
    wheelbase: Option<f64>,
    params: Option<InferenceParams>,
    matcher: Option<MatcherArg>,
    output: Option<&Path>,
    diagnostics: Option<&Path>,
) -> Result<()> {
    let params = params.unwrap_or_default();
    let (decoder, spec) = resolve_vehicle(vehicle.model.as_deref(), vehicle.decoder_file.as_deref(), wheelbase)?;
    let matcher = build_matcher(matcher, Path::new("."))?;
    let frames = load_log(log)?;
    let out = infer_path(&frames, &decoder, &spec, start, &params, matcher.as_ref())
        .map_err(|e| CliError::Run(e.to_string()))?;
    if let Some(first) = out.diagnostics.fallback_spans.first() {
        eprintln!(
            "warning: {} of {} batches unmatched, kept dead-reckoned points (first: {})",
            out.diagnostics.fallback_spans.len(),
            out.diagnostics.batches,
            first.reason
        );
    }
    if let Some(p) = diagnostics {
        write_text(p, &format!("params {params}\n{}", out.diagnostics.report()))?;
    }
    emit(output, &out.to_gpx())
}

fn cmd_compare(inferred: &Path, truth: &Path, epsilon: f64, spacing: f64) -> Result<()> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return usage("--epsilon must be positive");
    }
    if spacing.is_nan() || spacing < 0.0 {
        return usage("--spacing must be non-negative");
    }
    let (a, b) = (load_track(inferred)?, load_track(truth)?);
    let opts = CompareOptions {
        align: AlignParams { match_epsilon: epsilon, ..AlignParams::default() },
        resample_spacing: (spacing > 0.0).then_some(spacing),
    };
    let r = compare_tracks(&a, &b, &opts);
    let id = inferred.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    emit(None, &format!("{COMPARISON_CSV_HEADER}\n{}\n", comparison_csv_row(&id, b.length(), r.accuracy)))
}

fn scenario_from_file(path: &Path) -> Result<SimScenario> {
    let text = read_text(path)?;
    let f: ScenarioFile = toml::from_str(&text).map_err(|e| {
        let msg = e.to_string().lines().next().unwrap_or("").to_string();
        CliError::Input(format!("{}: {msg}", path.display()))
    })?;
    let base = parent_dir(path);
    let speed: Vec<SpeedSegment> = match (f.speed_kmh, f.speed.is_empty()) {
        (Some(kmh), true) => vec![SpeedSegment { from_m: 0.0, kmh }],
        (None, false) => f.speed.iter().map(|s| SpeedSegment { from_m: s.from_m, kmh: s.kmh }).collect(),
        _ => return Err(CliError::Input(format!("{}: give exactly one of speed_kmh or [[speed]]", path.display()))),
    };
    let model = f.model.as_deref().or(Some("Renault Captur"));
    let (decoder, spec) = resolve_vehicle(model, f.decoder_file.as_ref().map(|p| resolve(&base, p)).as_deref(), f.wheelbase)?;
    let graph = load_graph(&resolve(&base, &f.graph))?;
    let mut sc = SimScenario::new(f.name, graph, f.route, speed[0].kmh);
    sc.speed_profile = speed;
    sc.decoder = decoder;
    sc.spec = spec;
    if let Some(v) = f.swa_rate {
        sc.swa_rate = v;
    }
    if let Some(v) = f.obd_rate {
        sc.obd_rate = v;
    }
    if let Some(v) = f.start_bearing_error {
        sc.start_bearing_error = v;
    }
    if let Some(v) = f.turn_radius {
        sc.turn_radius = v;
    }
    if let Some(v) = f.start_time {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Input(format!("{}: start_time must be non-negative", path.display())));
        }
        sc.start_time = Timestamp::from_secs_f64(v);
    }
    if let Some(v) = f.interface {
        sc.interface = v;
    }
    Ok(sc)
}

fn builtin_scenario(name: &str) -> Result<SimScenario> {
    suite::standard_suite()
        .into_iter()
        .find(|s| s.name == name)
        .map_or_else(
            || {
                let names: Vec<String> = suite::standard_suite().into_iter().map(|s| s.name).collect();
                usage(format!("unknown built-in scenario {name:?}; available: {}", names.join(", ")))
            },
            Ok,
        )
}

fn cmd_synth(scenario: Option<&Path>, builtin: Option<&str>, out_dir: &Path) -> Result<()> {
    let sc = match (scenario, builtin) {
        (_, Some(name)) => builtin_scenario(name)?,
        (Some(p), None) => scenario_from_file(p)?,
        (None, None) => return usage("missing scenario file or --builtin"),
    };
    let out = simulate(&sc).map_err(|e| CliError::Run(format!("{}: {e}", sc.name)))?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(out_dir.to_path_buf(), e))?;

    let file = |ext: &str| format!("{}.{ext}", sc.name);
    let mut log = Vec::new();
    write_log(&mut log, &out.log).map_err(|e| CliError::Run(e.to_string()))?;
    write_text(&out_dir.join(file("log")), &String::from_utf8_lossy(&log))?;
    write_text(&out_dir.join(file("truth.gpx")), &write_gpx(&out.truth))?;
    write_text(&out_dir.join(file("graph")), &sc.graph.to_text())?;

    let d = &sc.decoder;
    let sheet = format!(
        "version 1\nmodel,id,byte_hi,byte_lo,offset,scale,mode,wheelbase_m\n{},{:03X},{},{},{:04X},{},{},{}\n",
        sc.spec.model, d.id, d.byte_hi, d.byte_lo, d.offset, d.scale, d.mode, sc.spec.wheelbase
    );
    write_text(&out_dir.join(file("sheet")), &sheet)?;

    let manifest = Manifest {
        grids: None,
        track: vec![TrackEntry {
            name: Some(sc.name.clone()),
            log: file("log").into(),
            truth: file("truth.gpx").into(),
            start: [out.start.lat, out.start.lon, out.start.bearing],
            model: Some(sc.spec.model.clone()),
            wheelbase: None,
            decoder_file: Some(file("sheet").into()),
            graph: Some(file("graph").into()),
            matcher: None,
        }],
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Run(e.to_string()))?;
    let manifest_path = out_dir.join(file("manifest.toml"));
    write_text(&manifest_path, &text)?;
    println!("{}", manifest_path.display());
    Ok(())
}

fn tune_track(base: &Path, entry: &TrackEntry, index: usize) -> Result<TuneTrack> {
    let [lat, lon, bearing] = entry.start;
    if !LatLon::new(lat, lon).is_valid() {
        return Err(CliError::Input(format!("track {index}: start out of range")));
    }
    let decoder_file = entry.decoder_file.as_ref().map(|p| resolve(base, p));
    let (decoder, spec) = resolve_vehicle(entry.model.as_deref(), decoder_file.as_deref(), entry.wheelbase)?;
    let matcher_arg = match (&entry.matcher, &entry.graph) {
        (Some(m), _) => Some(m.parse::<MatcherArg>().map_err(|e| CliError::Input(format!("track {index}: {e}")))?),
        (None, Some(g)) => Some(MatcherArg::Internal(g.clone())),
        (None, None) => None,
    };
    Ok(TuneTrack {
        name: entry.name.clone().unwrap_or_else(|| format!("track{index}")),
        log: load_log(&resolve(base, &entry.log))?,
        truth: load_track(&resolve(base, &entry.truth))?,
        start: VehiclePose::new(lat, lon, bearing),
        decoder,
        spec,
        matcher: build_matcher(matcher_arg, base)?,
    })
}

fn cmd_tune(manifest_path: &Path, workers: Option<usize>, output: Option<&Path>, marginals: Option<&Path>) -> Result<()> {
    if workers == Some(0) {
        return usage("--workers must be at least 1");
    }
    let text = read_text(manifest_path)?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| {
        let msg = e.to_string().lines().next().unwrap_or("").to_string();
        CliError::Input(format!("{}: {msg}", manifest_path.display()))
    })?;
    if manifest.track.is_empty() {
        return Err(CliError::Input(format!("{}: no [[track]] entries", manifest_path.display())));
    }
    let mut grids = Grids::default();
    if let Some(g) = manifest.grids {
        grids.t_window = g.t_window.unwrap_or(grids.t_window);
        grids.speed_max = g.speed_max.unwrap_or(grids.speed_max);
        grids.steer_max = g.steer_max.unwrap_or(grids.steer_max);
        grids.max_interpolation_points = g.max_interpolation_points.unwrap_or(grids.max_interpolation_points);
    }
    if grids.is_empty() {
        return Err(CliError::Input("a parameter grid is empty".into()));
    }
    let base = parent_dir(manifest_path);
    let tracks = manifest
        .track
        .iter()
        .enumerate()
        .map(|(i, e)| tune_track(&base, e, i))
        .collect::<Result<Vec<_>>>()?;
    let report = grid_search(&tracks, &grids, &CompareOptions::default(), workers).map_err(CliError::Run)?;
    if let Some(p) = marginals {
        write_text(p, &report.marginals_csv())?;
    }
    emit(output, &report.to_csv())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rewheel { log, id_ceiling, all } => cmd_rewheel(&log, id_ceiling, all),
        Command::Decode { log, vehicle } => cmd_decode(&log, &vehicle),
        Command::Logfilter { log, swa_id, output } => cmd_logfilter(&log, swa_id, output.as_deref()),
        Command::Infer { log, start, vehicle, wheelbase, params, matcher, output, diagnostics } => cmd_infer(
            &log,
            start.0,
            &vehicle,
            wheelbase,
            params,
            matcher,
            output.as_deref(),
            diagnostics.as_deref(),
        ),
        Command::Compare { inferred, truth, epsilon, spacing } => cmd_compare(&inferred, &truth, epsilon, spacing),
        Command::Synth { scenario, builtin, out_dir } => cmd_synth(scenario.as_deref(), builtin.as_deref(), &out_dir),
        Command::Tune { manifest, workers, output, marginals } => {
            cmd_tune(&manifest, workers, output.as_deref(), marginals.as_deref())
        }
    }
}

/// Collapses clap's multi-line message into one line.
fn one_line(err: &clap::Error) -> String {
    err.to_string()
        .lines()
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .trim_start_matches("error: ")
        .to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", CliError::Usage(one_line(&e)));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
