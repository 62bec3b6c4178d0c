use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use perfit_core::config::{ConfigError, DataSpec, ExperimentConfig, SimConfig};
use perfit_core::csvio::{
    parse_difficulty_csv, parse_key_csv, parse_raw_csv, parse_scored_csv, write_scored_csv,
};
use perfit_core::experiment::{
    natural_level, run_multi_agent, run_sensitivity, run_two_group, stack_groups,
    ExperimentDesign, ExperimentError, ExperimentReport,
};
use perfit_core::report::{fmt_sig6, level_token, to_json, write_density_csv, write_pfs_csv, Envelope};
use perfit_core::{
    compute_all, compute_all_with, filter_degenerate_items, flag_aberrant, score as score_raw,
    Alternative, DataError, ItemStats64, Measure, PfsError, PfsRecord64, ResponseMatrix,
};

use crate::output::{ensure_dir, write_atomic, write_text, Log};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io(String),
    Untestable(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Untestable(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
            CliError::Untestable(m) => write!(f, "untestable: {m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(m) => CliError::Io(m),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<PfsError> for CliError {
    fn from(e: PfsError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. }
            | ConfigError::Data {
                source: DataError::Io(_),
                ..
            } => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Data(d) => d.into(),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Invalid(format!("json: {e}"))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// File-name token of a measure.
fn measure_token(m: Measure) -> &'static str {
    match m {
        Measure::G => "g",
        Measure::GStar => "gstar",
        Measure::U3 => "u3",
        Measure::ZU3 => "zu3",
    }
}

pub fn score(raw: &Path, key: &Path, out: &Path, log: &Log) -> Result<(), CliError> {
    let raw = parse_raw_csv(raw)?;
    let key = parse_key_csv(key)?;
    let m = score_raw(&raw, &key)?;
    write_atomic(out, |w| write_scored_csv(&m, w).map_err(std::io::Error::other))?;
    log.info(format!(
        "scored {} respondents on {} items",
        m.n_respondents(),
        m.n_items()
    ));
    Ok(())
}

fn person_fit(
    input: &Path,
    difficulty: Option<&Path>,
    log: &Log,
) -> Result<Vec<PfsRecord64>, CliError> {
    let m = parse_scored_csv(input)?;
    if let Some(path) = difficulty {
        let reference = parse_difficulty_csv(path)?;
        let stats = ItemStats64::from_reference(m.items(), &reference)?;
        return Ok(compute_all_with(&m, &stats)?);
    }
    let (kept, dropped) = filter_degenerate_items(&m)?;
    if !dropped.is_empty() {
        let sums = m.column_sums();
        for id in &dropped {
            let j = m.items().iter().position(|i| i == id).expect("dropped item exists");
            log.warn(format!(
                "dropped item '{id}': proportion correct {}",
                sums[j] as f64 / m.n_respondents() as f64
            ));
        }
    }
    Ok(compute_all(&kept)?)
}

pub fn pfs(input: &Path, out: &Path, difficulty: Option<&Path>, log: &Log) -> Result<(), CliError> {
    let records = person_fit(input, difficulty, log)?;
    write_atomic(out, |w| write_pfs_csv(&records, w))?;
    let invalid = records.iter().filter(|r| !r.valid).count();
    if invalid > 0 {
        log.info(format!("{invalid} respondents with undefined statistics (valid=false)"));
    }
    Ok(())
}

pub fn flag(
    input: &Path,
    measure: Measure,
    threshold: f64,
    out: Option<&Path>,
    difficulty: Option<&Path>,
    log: &Log,
) -> Result<(), CliError> {
    let records = person_fit(input, difficulty, log)?;
    let by_id: HashMap<&str, &PfsRecord64> =
        records.iter().map(|r| (r.respondent_id.as_str(), r)).collect();
    let hits = flag_aberrant(&records, measure, threshold);
    let fill = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "respondent_id,source,{}", measure.label())?;
        for id in &hits {
            let rec = by_id[id.as_str()];
            let value = rec.get(measure).expect("flagged records are valid");
            writeln!(w, "{id},{},{}", rec.source, fmt_sig6(value))?;
        }
        Ok(())
    };
    match out {
        Some(path) => write_atomic(path, fill),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            fill(&mut lock).map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>, log: &Log) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(path) => SimConfig::from_json(&read_text(path)?, &path.display().to_string())?,
        None => SimConfig::default(),
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    let m = cfg.generate()?;
    write_atomic(out, |w| write_scored_csv(&m, w).map_err(std::io::Error::other))?;
    log.info(format!(
        "simulated {} respondents on {} items",
        m.n_respondents(),
        m.n_items()
    ));
    Ok(())
}

pub struct PipelineOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub measures: Option<Vec<Measure>>,
    pub alternative: Option<Alternative>,
}

/// Effective config after command-line overrides, with inline sources
/// seeded, plus the master seed and the directory relative paths resolve in.
struct Loaded {
    cfg: ExperimentConfig,
    master: u64,
    base: PathBuf,
}

fn load_config(opts: &PipelineOptions) -> Result<Loaded, CliError> {
    let text = read_text(&opts.config)?;
    let mut cfg = ExperimentConfig::from_json(&text, &opts.config.display().to_string())?;
    if let Some(m) = &opts.measures {
        cfg.measures = m.clone();
    }
    if let Some(a) = opts.alternative {
        cfg.alternative = a;
    }
    if let Some(s) = opts.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    let master = *cfg.seeds.first().ok_or(ConfigError::MissingSeed)?;
    let base = opts
        .config
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok(Loaded {
        cfg: cfg.seeded(master),
        master,
        base,
    })
}

/// Agent sources with labels made unique by a `_<position>` suffix.
fn agent_groups(loaded: &Loaded) -> Result<Vec<(String, ResponseMatrix)>, CliError> {
    let mut seen = HashSet::new();
    loaded
        .cfg
        .agents
        .iter()
        .enumerate()
        .map(|(k, spec): (usize, &DataSpec)| {
            let mut label = spec.label();
            if !seen.insert(label.clone()) {
                label = format!("{label}_{}", k + 1);
                seen.insert(label.clone());
            }
            Ok((label, spec.load(&loaded.base)?))
        })
        .collect()
}

fn design(
    loaded: &Loaded,
    level: f64,
    n_agent: usize,
    seed: u64,
) -> Result<ExperimentDesign, CliError> {
    let cfg = &loaded.cfg;
    let mut d = ExperimentDesign::new(level, n_agent, seed)?;
    d.measures = cfg.measures.clone();
    d.alternative = cfg.alternative;
    d.difficulty = cfg.difficulty;
    d.instrument = cfg.instrument();
    Ok(d)
}

fn first_level(loaded: &Loaded, n_human: usize, n_agent: usize, log: &Log, pipeline: &str) -> f64 {
    let levels = &loaded.cfg.levels;
    if levels.len() > 1 {
        log.warn(format!("{pipeline} runs the first level only; sensitivity covers several"));
    }
    levels
        .first()
        .copied()
        .unwrap_or_else(|| natural_level(n_human, n_agent))
}

fn write_reports(
    pipeline: &str,
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
    dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let token = level_token(report.design.pollution_level);
    let all = to_json(&Envelope::new(pipeline, cfg, report)).map_err(json_err)?;
    write_text(&dir.join(format!("{pipeline}_all_{token}.json")), &all)?;
    for &m in &report.design.measures {
        let part = report.for_measure(m);
        let stem = format!("{pipeline}_{}_{token}", measure_token(m));
        let json = to_json(&Envelope::new(pipeline, cfg, &part)).map_err(json_err)?;
        write_text(&dir.join(format!("{stem}.json")), &json)?;
        write_atomic(&dir.join(format!("{stem}.csv")), |w| write_density_csv(&part.densities, w))?;
    }
    Ok(())
}

fn untestable(reports: &[&ExperimentReport]) -> Result<(), CliError> {
    let mut what: Vec<String> = Vec::new();
    for r in reports {
        for u in &r.untestable {
            what.push(format!(
                "{} at level {} seed {}: {}",
                u.measure,
                level_token(r.design.pollution_level),
                r.design.seed,
                u.reason
            ));
        }
    }
    if what.is_empty() {
        Ok(())
    } else {
        Err(CliError::Untestable(what.join("; ")))
    }
}

pub fn compare(opts: &PipelineOptions, log: &Log) -> Result<(), CliError> {
    let loaded = load_config(opts)?;
    let humans = loaded.cfg.humans.load(&loaded.base)?;
    let groups = agent_groups(&loaded)?;
    let agents = stack_groups(&groups)?;
    let level = first_level(&loaded, humans.n_respondents(), agents.n_respondents(), log, "compare");
    let d = design(&loaded, level, agents.n_respondents(), loaded.master)?;
    let report = run_two_group(&d, &humans, &agents)?;
    write_reports("compare", &loaded.cfg, &report, &opts.out)?;
    log.info(format!(
        "compare: {} humans, {} agents, {} tests",
        d.n_human,
        d.n_agent,
        report.tests.len()
    ));
    untestable(&[&report])
}

pub fn multigroup(opts: &PipelineOptions, log: &Log) -> Result<(), CliError> {
    let loaded = load_config(opts)?;
    let humans = loaded.cfg.humans.load(&loaded.base)?;
    let groups = agent_groups(&loaded)?;
    let n_agent: usize = groups.iter().map(|(_, m)| m.n_respondents()).sum();
    let level = first_level(&loaded, humans.n_respondents(), n_agent, log, "multigroup");
    let d = design(&loaded, level, n_agent, loaded.master)?;
    let report = run_multi_agent(&d, &humans, &groups)?;
    write_reports("multigroup", &loaded.cfg, &report, &opts.out)?;
    log.info(format!(
        "multigroup: {} humans, {} agent groups, {} tests",
        d.n_human,
        groups.len(),
        report.tests.len()
    ));
    untestable(&[&report])
}

pub fn sensitivity(opts: &PipelineOptions, log: &Log) -> Result<(), CliError> {
    let loaded = load_config(opts)?;
    let cfg = &loaded.cfg;
    if cfg.levels.is_empty() {
        return Err(CliError::Invalid("sensitivity needs at least one level".into()));
    }
    let humans = cfg.humans.load(&loaded.base)?;
    let groups = agent_groups(&loaded)?;
    let agents = stack_groups(&groups)?;
    let base = design(&loaded, cfg.levels[0], agents.n_respondents(), loaded.master)?;
    let sr = run_sensitivity(&base, &cfg.levels, &cfg.seeds, &humans, &agents)?;

    ensure_dir(&opts.out)?;
    let summary = to_json(&Envelope::new("sensitivity", cfg, &sr)).map_err(json_err)?;
    write_text(&opts.out.join("sensitivity_summary.json"), &summary)?;
    for level in &sr.levels {
        let token = level_token(level.level);
        for &m in &cfg.measures {
            let reports: Vec<ExperimentReport> = level.reports.iter().map(|r| r.for_measure(m)).collect();
            let body = serde_json::json!({
                "level": level.level,
                "n_human": level.n_human,
                "n_agent": level.n_agent,
                "measure": m,
                "summary": level.measures.iter().find(|s| s.measure == m),
                "groups": level.groups.iter().filter(|g| g.measure == m).collect::<Vec<_>>(),
                "reports": reports,
            });
            let stem = format!("sensitivity_{}_{token}", measure_token(m));
            let json = to_json(&Envelope::new("sensitivity", cfg, &body)).map_err(json_err)?;
            write_text(&opts.out.join(format!("{stem}.json")), &json)?;
            let bins: Vec<_> = level.densities.iter().filter(|b| b.measure == m).cloned().collect();
            write_atomic(&opts.out.join(format!("{stem}.csv")), |w| write_density_csv(&bins, w))?;
        }
        log.info(format!(
            "level {token}: {} humans, {} agents, {} seeds",
            level.n_human,
            level.n_agent,
            level.seeds.len()
        ));
    }
    let all: Vec<&ExperimentReport> = sr.levels.iter().flat_map(|l| l.reports.iter()).collect();
    untestable(&all)
}
