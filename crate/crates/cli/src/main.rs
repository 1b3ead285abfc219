mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clipattr::attribution::{attribute, AttributionOptions, DEFAULT_K_CLIPS, DEFAULT_K_SONGS, DEFAULT_THRESHOLD};
use clipattr::audio::{
    ingest_audio, read_clip_table, read_song_table, write_clip_table, write_manifest, write_song_table, write_wav,
    ClipSource, Corpus, ManifestEntry, CANONICAL_RATE,
};
use clipattr::calibrate::{
    aggregate_abx, calibrate, generate_abx_trials, read_responses, read_trials, write_trials, CalibrationProfile,
    DEFAULT_BASELINE_PAIRS, DEFAULT_QUERIES, DEFAULT_TOP_M,
};
use clipattr::embed::{export_embeddings, import_embeddings};
use clipattr::perturb::PerturbationKind;
use clipattr::synth::{synth_songs, SynthConfig};
use clipattr::workbench::{
    model_eval, read_query_manifest, render_report, robustness_sweep, Partners, Report, ReportFormat,
    SweepConfig, SweepContext, DEFAULT_THRESHOLDS,
};
use clipattr::{AudioBuffer, ClipRecord, Embedder, Error, ErrorKind, IndexConfig, Result, SearchMode, VectorIndex};
use serde::Deserialize;

use config::Config;

/// Clip-level similarity search and attribution for music.
#[derive(Debug, Parser)]
#[command(name = "clipattr", version)]
struct Cli {
    /// TOML configuration file; command-line options take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Segment the songs in a manifest and write clip and song tables.
    Ingest(IngestArgs),
    /// Embed every clip in a clip table.
    Embed(EmbedArgs),
    #[command(subcommand)]
    Index(IndexCmd),
    /// Attribute one audio file against an index.
    Query(QueryArgs),
    /// Fit a calibration profile to an index.
    Calibrate(CalibrateArgs),
    #[command(subcommand)]
    Abx(AbxCmd),
    /// Recall of perturbed stored clips across a level grid.
    Sweep(SweepArgs),
    /// Attribute a set of generated clips and tabulate the results.
    EvalModel(EvalArgs),
    /// Write a synthetic corpus of WAV files and its manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Song table path; defaults to songs.jsonl next to the clip table.
    #[arg(long)]
    songs: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    clips: PathBuf,
    /// Corpus manifest the clips were cut from.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum IndexCmd {
    /// Build an index from an embedding store.
    Build(IndexBuildArgs),
}

#[derive(Debug, Args)]
struct IndexBuildArgs {
    store: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long = "ef-construction", alias = "efc")]
    ef_construction: Option<usize>,
    #[arg(long)]
    ef_search: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    audio: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    songs: Option<PathBuf>,
    /// Prompt audio; adds a prompt similarity to the report.
    #[arg(long)]
    prompt: Option<PathBuf>,
    #[arg(long)]
    k_clips: Option<usize>,
    #[arg(long)]
    k_songs: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Calibration profile supplying the threshold.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// exact or ann.
    #[arg(long)]
    mode: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    index: PathBuf,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    baseline_pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AbxCmd {
    /// Generate listening trials for random prompts.
    Gen(AbxGenArgs),
    /// Tabulate listener responses.
    Aggregate(AbxAggArgs),
}

#[derive(Debug, Args)]
struct AbxGenArgs {
    index: PathBuf,
    profile: PathBuf,
    #[arg(long)]
    prompts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AbxAggArgs {
    trials: PathBuf,
    responses: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// json or csv; inferred from the output extension when absent.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// pitch, stretch, noise or mashup.
    kind: String,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Manifest of the indexed corpus.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// "from:to:step" or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k_clips: Option<usize>,
    /// Mash-up partners: indexed, external or paired.
    #[arg(long)]
    partners: Option<String>,
    /// Manifest of non-indexed partner songs, for external partners.
    #[arg(long)]
    partner_manifest: Option<PathBuf>,
    /// JSON lines of {song_id, clip_index, partner_path}, for paired partners.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON lines of {query_id, path, prompt_path?}.
    queries: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    songs: Option<PathBuf>,
    /// Comma-separated, descending.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Calibration profile supplying the thresholds.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    k_clips: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    songs: Option<usize>,
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Io => 3,
                ErrorKind::Invariant => 4,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Ingest(a) => ingest(a, &cfg),
        Cmd::Embed(a) => embed(a, &cfg),
        Cmd::Index(IndexCmd::Build(a)) => index_build(a, &cfg),
        Cmd::Query(a) => query(a, &cfg),
        Cmd::Calibrate(a) => calibrate_cmd(a, &cfg),
        Cmd::Abx(AbxCmd::Gen(a)) => abx_gen(a, &cfg),
        Cmd::Abx(AbxCmd::Aggregate(a)) => abx_aggregate(a, &cfg),
        Cmd::Sweep(a) => sweep(a, &cfg),
        Cmd::EvalModel(a) => eval_model(a, &cfg),
        Cmd::Synth(a) => synth(a, &cfg),
    }
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidArgument(format!("--{name} is required")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_mode(flag: Option<String>, cfg: &Option<String>) -> Result<SearchMode> {
    flag.or_else(|| cfg.clone()).map_or(Ok(SearchMode::Ann), |m| m.parse())
}

/// Explicit format, then the output extension, then JSON.
fn report_format(flag: Option<String>, cfg: &Option<String>, out: &Path) -> Result<ReportFormat> {
    match flag.or_else(|| cfg.clone()) {
        Some(f) => f.parse(),
        None => Ok(ReportFormat::from_path(out).unwrap_or(ReportFormat::Json)),
    }
}

fn write_report(report: &dyn Report, out: &Path, format: ReportFormat) -> Result<()> {
    write_file(out, &render_report(report, format)?)
}

fn embedder(cfg: &Config) -> Result<Embedder> {
    Embedder::new(cfg.embedder.clone())
}

fn ingest(a: IngestArgs, cfg: &Config) -> Result<()> {
    let out = required(a.out.or_else(|| cfg.ingest.out.clone()), "out")?;
    let songs = a
        .songs
        .or_else(|| cfg.ingest.songs.clone())
        .unwrap_or_else(|| out.with_file_name("songs.jsonl"));
    let corpus = Corpus::from_manifest(&a.manifest, cfg.embedder.sample_rate)?;
    let clips: Vec<ClipRecord> = corpus.clips()?.into_iter().map(|(r, _)| r).collect();
    write_clip_table(&out, &clips)?;
    write_song_table(&songs, &corpus.meta_table())?;
    eprintln!("{} songs, {} clips", corpus.len(), clips.len());
    Ok(())
}

fn embed(a: EmbedArgs, cfg: &Config) -> Result<()> {
    let manifest = required(a.manifest.or_else(|| cfg.embed.manifest.clone()), "manifest")?;
    let out = required(a.out.or_else(|| cfg.embed.out.clone()), "out")?;
    let embedder = embedder(cfg)?;
    let corpus = Corpus::from_manifest(&manifest, cfg.embedder.sample_rate)?;
    let items = read_clip_table(&a.clips)?
        .into_iter()
        .map(|clip| {
            let e = embedder.embed(&corpus.clip_audio(&clip)?)?;
            Ok((clip, e))
        })
        .collect::<Result<Vec<_>>>()?;
    export_embeddings(&items, &out)?;
    eprintln!("{} embeddings of dimension {}", items.len(), embedder.dim());
    Ok(())
}

fn index_build(a: IndexBuildArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.index;
    let d = IndexConfig::default();
    let icfg = IndexConfig {
        m: a.m.or(c.m).unwrap_or(d.m),
        ef_construction: a.ef_construction.or(c.ef_construction).unwrap_or(d.ef_construction),
        ef_search: a.ef_search.or(c.ef_search).unwrap_or(d.ef_search),
        seed: a.seed.or(c.seed).unwrap_or(d.seed),
    };
    let out = required(a.out.or_else(|| c.out.clone()), "out")?;
    let idx = VectorIndex::build(import_embeddings(&a.store)?, icfg)?;
    idx.save(&out)?;
    eprintln!("indexed {} clips", idx.len());
    Ok(())
}

fn load_index(flag: Option<PathBuf>, cfg: &Option<PathBuf>, embedder: &Embedder) -> Result<VectorIndex> {
    let path = required(flag.or_else(|| cfg.clone()), "index")?;
    VectorIndex::load_with_dim(path, embedder.dim())
}

fn query(a: QueryArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.query;
    let embedder = embedder(cfg)?;
    let idx = load_index(a.index, &c.index, &embedder)?;
    let meta = read_song_table(required(a.songs.or_else(|| c.songs.clone()), "songs")?)?;
    let threshold = match a.threshold.or(c.threshold) {
        Some(t) => t,
        None => match a.profile.or_else(|| c.profile.clone()) {
            Some(p) => CalibrationProfile::load(p)?.high_similarity_threshold,
            None => DEFAULT_THRESHOLD,
        },
    };
    let opts = AttributionOptions {
        k_clips: a.k_clips.or(c.k_clips).unwrap_or(DEFAULT_K_CLIPS),
        k_songs: a.k_songs.or(c.k_songs).unwrap_or(DEFAULT_K_SONGS),
        threshold,
        mode: parse_mode(a.mode, &c.mode)?,
    };
    let rate = cfg.embedder.sample_rate;
    let audio = ingest_audio(&a.audio, rate)?;
    let prompt = match a.prompt.or_else(|| c.prompt.clone()) {
        Some(p) => Some(ingest_audio(p, rate)?),
        None => None,
    };
    let query_id = a
        .audio
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = attribute(&query_id, &audio, &idx, &embedder, &meta, &opts, prompt.as_ref())?;
    let mut text = serde_json::to_vec_pretty(&report.to_json()).map_err(|e| Error::Invariant(e.to_string()))?;
    text.push(b'\n');
    match a.out.or_else(|| c.out.clone()) {
        Some(out) => write_file(&out, &text),
        None => std::io::stdout().write_all(&text).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}

fn calibrate_cmd(a: CalibrateArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.calibrate;
    let out = required(a.out.or_else(|| c.out.clone()), "out")?;
    let idx = VectorIndex::load(&a.index)?;
    let profile = calibrate(
        &idx,
        a.queries.or(c.queries).unwrap_or(DEFAULT_QUERIES),
        a.top.or(c.top).unwrap_or(DEFAULT_TOP_M),
        a.baseline_pairs.or(c.baseline_pairs).unwrap_or(DEFAULT_BASELINE_PAIRS),
        a.seed.or(c.seed).unwrap_or(0),
    )?;
    profile.save(&out)?;
    eprintln!(
        "median {:.4}, sd {:.4}, threshold {:.4}",
        profile.median, profile.sd, profile.high_similarity_threshold
    );
    Ok(())
}

fn abx_gen(a: AbxGenArgs, cfg: &Config) -> Result<()> {
    let idx = VectorIndex::load(&a.index)?;
    let profile = CalibrationProfile::load(&a.profile)?;
    let trials = generate_abx_trials(
        &idx,
        &profile,
        a.prompts.or(cfg.abx.prompts).unwrap_or(15),
        a.seed.or(cfg.abx.seed).unwrap_or(0),
    )?;
    write_trials(&a.out, &trials)?;
    eprintln!("{} trials", trials.len());
    Ok(())
}

fn abx_aggregate(a: AbxAggArgs, cfg: &Config) -> Result<()> {
    let format = report_format(a.format, &cfg.abx.format, &a.out)?;
    let table = aggregate_abx(&read_trials(&a.trials)?, &read_responses(&a.responses)?)?;
    write_report(&table, &a.out, format)
}

/// `from:to:step` (inclusive) or `a,b,c`.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad grid {s:?}"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(num).collect::<Result<_>>()?;
        let [from, to, step] = parts[..] else {
            return Err(bad());
        };
        if step.is_nan() || step <= 0.0 || !from.is_finite() || !to.is_finite() || to < from {
            return Err(bad());
        }
        let n = ((to - from) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| from + i as f64 * step).collect())
    } else {
        s.split(',').map(num).collect()
    }
}

#[derive(Debug, Deserialize)]
struct PairLine {
    song_id: String,
    clip_index: u32,
    partner_path: PathBuf,
}

fn read_pairs(path: &Path, idx: &VectorIndex, rate: u32) -> Result<Vec<(ClipRecord, AudioBuffer)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let p: PairLine =
                serde_json::from_str(line).map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), n + 1)))?;
            let entry = idx.find(&p.song_id, p.clip_index).ok_or(Error::UnknownClip {
                song_id: p.song_id.clone(),
                clip_index: p.clip_index,
            })?;
            let audio = ingest_audio(base.join(&p.partner_path), rate)?;
            Ok((idx.record(entry).clone(), audio))
        })
        .collect()
}

fn sweep(a: SweepArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.sweep;
    let kind: PerturbationKind = a.kind.parse()?;
    let embedder = embedder(cfg)?;
    let idx = load_index(a.index, &c.index, &embedder)?;
    let rate = cfg.embedder.sample_rate;
    let corpus = Corpus::from_manifest(required(a.manifest.or_else(|| c.manifest.clone()), "manifest")?, rate)?;
    let meta = corpus.meta_table();
    let out = required(a.out.or_else(|| c.out.clone()), "out")?;
    let format = report_format(a.format, &c.format, &out)?;

    let mut scfg = SweepConfig::new(kind);
    if let Some(g) = a.grid.or_else(|| c.grid.clone()) {
        scfg.levels = parse_grid(&g)?;
    }
    scfg.n_targets = a.targets.or(c.targets).unwrap_or(scfg.n_targets);
    scfg.mode = parse_mode(a.mode, &c.mode)?;
    scfg.k_clips = a.k_clips.or(c.k_clips).unwrap_or(scfg.k_clips);
    let seed = a.seed.or(c.seed).unwrap_or(0);

    let variant = a.partners.or_else(|| c.partners.clone()).unwrap_or_else(|| "indexed".into());
    let partner_manifest = a.partner_manifest.or_else(|| c.partner_manifest.clone());
    let pairs_path = a.pairs.or_else(|| c.pairs.clone());
    let external: Corpus;
    let external_clips: Vec<ClipRecord>;
    let pairs: Vec<(ClipRecord, AudioBuffer)>;
    let partners = match variant.as_str() {
        "indexed" => Partners::Indexed,
        "external" => {
            external = Corpus::from_manifest(required(partner_manifest, "partner-manifest")?, rate)?;
            external_clips = external.clips()?.into_iter().map(|(r, _)| r).collect();
            Partners::External {
                source: &external,
                clips: &external_clips,
            }
        }
        "paired" => {
            pairs = read_pairs(&required(pairs_path, "pairs")?, &idx, rate)?;
            Partners::Paired(&pairs)
        }
        other => return Err(Error::InvalidArgument(format!("unknown partner variant {other:?}"))),
    };
    let ctx = SweepContext {
        idx: &idx,
        source: &corpus,
        embedder: &embedder,
        meta: &meta,
        partners,
    };
    let curve = robustness_sweep(&ctx, &scfg, seed)?;
    write_report(&curve, &out, format)
}

fn eval_model(a: EvalArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.eval;
    let embedder = embedder(cfg)?;
    let idx = load_index(a.index, &c.index, &embedder)?;
    let meta = read_song_table(required(a.songs.or_else(|| c.songs.clone()), "songs")?)?;
    let thresholds = match a.thresholds.or_else(|| c.thresholds.clone()) {
        Some(t) => t,
        None => match a.profile.or_else(|| c.profile.clone()) {
            Some(p) => CalibrationProfile::load(p)?.census_thresholds(),
            None => DEFAULT_THRESHOLDS.to_vec(),
        },
    };
    let out = required(a.out.or_else(|| c.out.clone()), "out")?;
    let format = report_format(a.format, &c.format, &out)?;
    let queries = read_query_manifest(&a.queries, cfg.embedder.sample_rate)?;
    let summary = model_eval(
        &queries,
        &idx,
        &embedder,
        &meta,
        &thresholds,
        a.k_clips.or(c.k_clips).unwrap_or(DEFAULT_K_CLIPS),
        parse_mode(a.mode, &c.mode)?,
    )?;
    write_report(&summary, &out, format)
}

fn synth(a: SynthArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.synth;
    let dir = required(a.out_dir.or_else(|| c.out_dir.clone()), "out-dir")?;
    let d = SynthConfig::default();
    let scfg = SynthConfig {
        songs: a.songs.or(c.songs).unwrap_or(d.songs),
        seconds_per_song: a.seconds.or(c.seconds).unwrap_or(d.seconds_per_song),
        sample_rate: CANONICAL_RATE,
        seed: a.seed.or(c.seed).unwrap_or(d.seed),
    };
    if scfg.songs == 0 || scfg.seconds_per_song.is_nan() || scfg.seconds_per_song <= 0.0 {
        return Err(Error::InvalidArgument("songs and seconds must be positive".into()));
    }
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let mut entries = Vec::with_capacity(scfg.songs);
    for (meta, audio) in synth_songs(&scfg) {
        write_wav(dir.join(&meta.source_path), &audio)?;
        entries.push(ManifestEntry {
            song_id: meta.song_id,
            title: meta.title,
            artist: meta.artist,
            source_path: meta.source_path,
        });
    }
    write_manifest(dir.join("manifest.jsonl"), &entries)?;
    eprintln!("{} songs in {}", entries.len(), dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clipattr::workbench::default_grid;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("-2:2:1").unwrap(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(parse_grid("5:95:10").unwrap().len(), 10);
        assert_eq!(parse_grid("0.5, 1,-3").unwrap(), vec![0.5, 1.0, -3.0]);
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-12);
        for bad in ["1:0:1", "0:1:0", "0:1", "a,b", ""] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn pitch_default_grid_is_used_without_flag() {
        assert_eq!(default_grid(PerturbationKind::PitchShift).len(), 25);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
