//! The five subcommands. Each returns the bytes it would print so output
//! handling lives in one place.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use urnbridge::bridge::estimated_w2;
use urnbridge::diagnostics::{covcheck, Scheme};
use urnbridge::stream_io::{read_stream, write_dictionary, write_stream, EncodedStream};
use urnbridge::{
    forward_counts, nystrom_eigs, run_estimated_theta_test, run_known_theta_test,
    sample_stream, zipf_law, AutoNull, CdfBackend, LimitSample, MonteCarloNull, NullDistribution,
    NullSpec, PrecomputedNull, ProbabilityLaw, SpectralModel, SpectralNull,
};

use crate::config::{config_error, BackendChoice, Format, RunConfig, DEFAULT_TAIL_MASS};

const DEFAULT_COV_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn law(cfg: &RunConfig, theta: f64) -> anyhow::Result<ProbabilityLaw> {
    let law = match cfg.settings.support {
        Some(0) => return config_error("--support must be at least 1"),
        Some(support) => zipf_law(theta, support)?,
        None => {
            let tail = cfg.settings.tail_mass.unwrap_or(DEFAULT_TAIL_MASS);
            if !(tail > 0.0 && tail < 1.0) {
                return config_error("--tail-mass must lie in (0,1)");
            }
            ProbabilityLaw::zipf_tail_safe(theta, tail, 0.0)?
        }
    };
    Ok(law)
}

fn read_input(cfg: &RunConfig) -> anyhow::Result<EncodedStream> {
    let path = cfg.input()?;
    let encoded = read_stream(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if let (Some(dict), Some(out)) = (&encoded.dictionary, &cfg.settings.dictionary) {
        let mut w = create(out)?;
        write_dictionary(&mut w, dict)?;
        w.flush()?;
    }
    Ok(encoded)
}

/// Text reports start with `# `-prefixed provenance; JSON wraps the payload.
fn render<T: Serialize>(cfg: &RunConfig, text_body: &str, payload: &T) -> String {
    match cfg.format() {
        Format::Text => {
            let mut out = String::new();
            for line in cfg.provenance() {
                out.push_str("# ");
                out.push_str(&line);
                out.push('\n');
            }
            out.push_str(text_body);
            out
        }
        Format::Json => {
            let config: serde_json::Value =
                serde_json::from_str(&cfg.to_json()).expect("config is valid JSON");
            let doc = json!({
                "command": cfg.command,
                "seed": cfg.seed,
                "config_digest": cfg.digest(),
                "config": config,
                "result": payload,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<Vec<u8>> {
    let theta = cfg.theta()?;
    let n = cfg.n()?;
    let n = usize::try_from(n).or_else(|_| config_error("--n is too large"))?;
    let law = law(cfg, theta)?;
    let stream = sample_stream(&law, n, cfg.seed)?;
    let mut header = cfg.provenance();
    header.push(format!("theta={theta}"));
    header.push(format!("n={n}"));
    header.push(format!("support={}", law.support()));
    header.push(format!("tail_bound={:e}", law.tail_bound()));
    let mut out = Vec::new();
    write_stream(&mut out, &header, &stream)?;
    Ok(out)
}

#[derive(Serialize)]
struct EstimateOutput {
    value: f64,
    raw: f64,
    forward: f64,
    backward: f64,
    n: usize,
    occupancy: u32,
    asym_sd: f64,
    clamped: bool,
    measure: String,
    w2_estimated: f64,
}

pub fn estimate(cfg: &RunConfig) -> anyhow::Result<Vec<u8>> {
    let measure = cfg.measure()?.unwrap_or_else(urnbridge::AMeasure::example1);
    let encoded = read_input(cfg)?;
    let (w2, est) = estimated_w2(&encoded.stream, &measure)?;
    let out = EstimateOutput {
        value: est.value,
        raw: est.raw(),
        forward: est.forward,
        backward: est.backward,
        n: est.n,
        occupancy: forward_counts(&encoded.stream).total(),
        asym_sd: est.asym_sd,
        clamped: est.clamped,
        measure: measure.spec_string(),
        w2_estimated: w2,
    };
    let text = format!(
        "theta={}\nraw={}\nforward={}\nbackward={}\nn={}\noccupancy={}\nasym_sd={}\nclamped={}\nmeasure={}\nw2_estimated={}\n",
        out.value,
        out.raw,
        out.forward,
        out.backward,
        out.n,
        out.occupancy,
        out.asym_sd,
        out.clamped,
        out.measure,
        out.w2_estimated
    );
    Ok(render(cfg, &text, &out).into_bytes())
}

fn read_artifact(path: &Path) -> anyhow::Result<PrecomputedNull> {
    let mut reader = open(path)?;
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let rest = first.as_bytes().chain(reader);
    let loaded = match first.trim() {
        "# urnbridge limit-sample" => PrecomputedNull::Sample(LimitSample::read(rest)?),
        "# urnbridge spectral-model" => PrecomputedNull::Spectral(SpectralModel::read(rest)?),
        other => return config_error(format!("{}: not a null-law artifact ({other:?})", path.display())),
    };
    Ok(loaded)
}

enum Backend {
    MonteCarlo(MonteCarloNull),
    Spectral(SpectralNull),
    Auto(AutoNull),
    Loaded(PrecomputedNull),
}

impl Backend {
    fn as_dyn(&self) -> &dyn NullDistribution {
        match self {
            Backend::MonteCarlo(b) => b,
            Backend::Spectral(b) => b,
            Backend::Auto(b) => b,
            Backend::Loaded(b) => b,
        }
    }

    /// Writes the law that answered `spec`, reusing the backend's cache.
    fn persist(&self, spec: &NullSpec, used: CdfBackend, header: &[String], path: &Path) -> anyhow::Result<()> {
        let mut w = create(path)?;
        match (self, used) {
            (Backend::MonteCarlo(b), _) => b.sample(spec)?.write(&mut w, header)?,
            (Backend::Spectral(b), _) => b.model(spec)?.write(&mut w, header)?,
            (Backend::Auto(b), CdfBackend::Spectral) => b.spectral().model(spec)?.write(&mut w, header)?,
            (Backend::Auto(b), _) => b.montecarlo().sample(spec)?.write(&mut w, header)?,
            (Backend::Loaded(PrecomputedNull::Sample(s)), _) => s.write(&mut w, header)?,
            (Backend::Loaded(PrecomputedNull::Spectral(m)), _) => m.write(&mut w, header)?,
        }
        w.flush()?;
        Ok(())
    }
}

fn backend(cfg: &RunConfig) -> anyhow::Result<Backend> {
    if let Some(path) = &cfg.settings.null {
        return Ok(Backend::Loaded(read_artifact(path)?));
    }
    let mc = || -> anyhow::Result<MonteCarloNull> {
        Ok(MonteCarloNull::new(cfg.grid_size(), cfg.positive_reps()?, cfg.seed))
    };
    let sp = || -> anyhow::Result<SpectralNull> {
        if cfg.nodes() < 4 * cfg.kmax() {
            return config_error("--nodes must be at least 4 × --kmax");
        }
        Ok(SpectralNull::new(cfg.nodes(), cfg.kmax()))
    };
    Ok(match cfg.settings.backend.unwrap_or(BackendChoice::Auto) {
        BackendChoice::Montecarlo => Backend::MonteCarlo(mc()?),
        BackendChoice::Spectral => Backend::Spectral(sp()?),
        BackendChoice::Auto => Backend::Auto(AutoNull::new(sp()?, mc()?)),
    })
}

/// Where `test` writes the null law: `--artifact`, else `<output>.null`.
fn artifact_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.settings.artifact.clone().or_else(|| {
        cfg.settings.output.as_ref().map(|o| {
            let mut p = o.clone().into_os_string();
            p.push(".null");
            PathBuf::from(p)
        })
    })
}

pub fn test(cfg: &RunConfig) -> anyhow::Result<Vec<u8>> {
    let measure = cfg.measure()?;
    let theta = match (cfg.settings.theta, &measure) {
        (Some(_), Some(_)) => {
            return config_error("give either --theta (known exponent) or --measure (estimated), not both")
        }
        (None, None) => return config_error("test needs --theta or --measure"),
        (Some(_), None) => Some(cfg.theta()?),
        (None, Some(_)) => None,
    };
    let backend = backend(cfg)?;
    let encoded = read_input(cfg)?;
    let report = match (theta, &measure) {
        (Some(t), _) => run_known_theta_test(&encoded.stream, t, backend.as_dyn())?,
        (None, Some(m)) => run_estimated_theta_test(&encoded.stream, m, backend.as_dyn())?,
        (None, None) => unreachable!("checked above"),
    };
    if let Some(path) = artifact_path(cfg) {
        if !matches!(backend, Backend::Loaded(_)) {
            let spec = NullSpec { theta: report.theta, measure: measure.clone() };
            backend.persist(&spec, report.cdf_backend, &cfg.provenance(), &path)?;
        }
    }
    Ok(render(cfg, &report.to_text(), &report).into_bytes())
}

pub fn tabulate(cfg: &RunConfig) -> anyhow::Result<Vec<u8>> {
    let theta = cfg.theta()?;
    let spec = NullSpec { theta, measure: cfg.measure()? };
    let header = cfg.provenance();
    let mut out = Vec::new();
    match cfg.settings.backend.unwrap_or(BackendChoice::Montecarlo) {
        BackendChoice::Montecarlo => {
            let sample = urnbridge::limit_w2_sample(&spec, cfg.grid_size(), cfg.positive_reps()?, cfg.seed)?;
            sample.write(&mut out, &header)?;
        }
        BackendChoice::Spectral | BackendChoice::Auto => {
            if cfg.nodes() < 4 * cfg.kmax() {
                return config_error("--nodes must be at least 4 × --kmax");
            }
            nystrom_eigs(&spec, cfg.nodes(), cfg.kmax())?.write(&mut out, &header)?;
        }
    }
    Ok(out)
}

pub fn covcheck_cmd(cfg: &RunConfig) -> anyhow::Result<Vec<u8>> {
    let theta = cfg.theta()?;
    let n = cfg.n()?;
    let grid = if cfg.settings.grid.is_empty() { DEFAULT_COV_GRID.to_vec() } else { cfg.settings.grid.clone() };
    if grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return config_error("--grid points must lie in (0,1]");
    }
    let law = law(cfg, theta)?;
    let table = covcheck(&law, theta, n, &grid, cfg.positive_reps()?, cfg.seed)?;
    let mut text = table.to_text();
    for scheme in [Scheme::FixedN, Scheme::Poissonized] {
        text.push_str(&format!("# within_3se[{scheme}]={}\n", table.fraction_within(scheme, 3.0)));
    }
    Ok(render(cfg, &text, &table).into_bytes())
}
