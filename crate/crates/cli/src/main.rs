use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use ptf_hardness::decode::{randomized_partial_labeling, DecodeConfig};
use ptf_hardness::gauss::RngSeed;
use ptf_hardness::label_cover::{generate_yes_instance, random_instance, Labeling, SmoothLabelCoverInstance};
use ptf_hardness::lemma_lab::{run_lemma, LemmaId, Verdict};
use ptf_hardness::poly::Polynomial;
use ptf_hardness::ptf::{dictator_linear_form, fit_probe, PTFHypothesis};
use ptf_hardness::reduction::{
    build_folding_basis, emit_instance, read_dataset, write_csv, write_dataset, CoordinateSpace, TestParams,
};

#[derive(Parser)]
#[command(name = "ptfhard", version, about = "Hardness instances and structural checks for learning noisy halfspaces with PTFs")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct SeedArgs {
    #[arg(long, env = "PTFHARD_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

impl SeedArgs {
    fn rng_seed(self) -> RngSeed {
        RngSeed::with_stream(self.seed, self.stream)
    }
}

#[derive(Args, Clone)]
struct TestArgs {
    /// PTF degree.
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Soundness gap.
    #[arg(long, default_value_t = 0.1)]
    xi: f64,
    /// Shift used for sampling in place of the (underflowing) honest value.
    #[arg(long, default_value_t = 1e-3)]
    eta_override: f64,
    /// Sample with the honest shift `exp(log η)` instead of the override.
    #[arg(long)]
    honest_eta: bool,
    #[arg(long)]
    eps_override: Option<f64>,
}

impl TestArgs {
    fn params(&self, k: u32) -> Result<TestParams> {
        let mut p = TestParams::new(self.d, self.xi, k)?;
        if !self.honest_eta {
            p = p.with_eta(self.eta_override);
        }
        if let Some(e) = self.eps_override {
            p = p.with_eps(e);
        }
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Label Cover instance.
    GenLc {
        #[arg(long)]
        nv: usize,
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        k: u32,
        #[arg(long = "L", alias = "l")]
        l: u32,
        /// Uniformly random projections with no planted labeling.
        #[arg(long)]
        random: bool,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the planted labeling.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Audit an instance, and optionally score a labeling on it.
    AuditLc {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Sample the basic test on an instance and write the dataset.
    Reduce {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        test: TestArgs,
        #[arg(long, default_value_t = 100_000)]
        points: usize,
        /// Project points onto the folded subspace.
        #[arg(long)]
        fold: bool,
        /// Replace Gaussian draws by normalized sums of N random signs.
        #[arg(long)]
        discretize: Option<u32>,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Accuracy of a threshold hypothesis on a dataset.
    Eval {
        /// Polynomial in text form over `Y^v_i` (raw data) or `f_r` (folded data).
        #[arg(long, required_unless_present = "probe")]
        hypothesis: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Labels per vertex of raw data; read from the dataset's manifest when omitted.
        #[arg(long)]
        k: Option<u32>,
        /// Fit a least-squares threshold polynomial of this degree instead.
        #[arg(long, conflicts_with = "hypothesis")]
        probe: Option<u32>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Randomized partial labeling decoded from a global polynomial.
    Decode {
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        test: TestArgs,
        /// Smoothness parameter R in the Γ₁ threshold.
        #[arg(long, default_value_t = 0)]
        r: u32,
        /// Use ν = ε²/4 instead of ν = ε²/2.
        #[arg(long)]
        nu_quarter: bool,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a randomized lemma corpus.
    Verify {
        #[arg(long)]
        lemma: LemmaArg,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, env = "PTFHARD_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Scripted end-to-end run.
    Pipeline {
        #[arg(long)]
        demo: Demo,
        #[arg(long, default_value_t = 100_000)]
        points: usize,
        #[command(flatten)]
        seed: SeedArgs,
        /// Directory for the generated artifacts.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LemmaArg {
    RobustPoly,
    VarRemoval,
    LowerBound,
    CoeffBounds,
    MonSubmult,
    QDecomp,
    CarberyWright,
    ChernoffProbe,
}

impl LemmaArg {
    fn id(self) -> LemmaId {
        match self {
            LemmaArg::RobustPoly => LemmaId::RobustPoly,
            LemmaArg::VarRemoval => LemmaId::VarRemoval,
            LemmaArg::LowerBound => LemmaId::LowerBound,
            LemmaArg::CoeffBounds => LemmaId::CoeffBounds,
            LemmaArg::MonSubmult => LemmaId::MonSubmult,
            LemmaArg::QDecomp => LemmaId::QDecomp,
            LemmaArg::CarberyWright => LemmaId::CarberyWright,
            LemmaArg::ChernoffProbe => LemmaId::ChernoffProbe,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    /// YES instance (30 vertices, degree 4, k=6, L=4) with d=1, ξ=0.1.
    D1,
}

/// Everything needed to regenerate an artifact.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    tool_version: &'static str,
    params: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<RngSeed>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str, params: Value, seed: Option<RngSeed>) -> Self {
        RunManifest {
            command: command.into(),
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            params,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(self)
    }

    fn output(mut self, path: &Path) -> Result<Self> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(self)
    }

    /// Writes `<primary>.manifest.json`.
    fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn load_instance(path: &Path) -> Result<SmoothLabelCoverInstance> {
    SmoothLabelCoverInstance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_poly(path: &Path) -> Result<Polynomial> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Polynomial::from_text(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn emit(report: &Value, json_out: Option<&Path>) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    if let Some(p) = json_out {
        write_json(p, report)?;
    }
    Ok(())
}

/// Outcome of a command: success, or a failed verdict.
enum Status {
    Ok,
    Failed,
}

fn gen_lc(
    nv: usize,
    degree: usize,
    k: u32,
    l: u32,
    random: bool,
    seed: SeedArgs,
    out: &Path,
    labels_out: Option<&Path>,
) -> Result<Status> {
    let mut rng = seed.rng_seed().rng();
    let (inst, sigma) = if random {
        (random_instance(nv, degree, k, l, &mut rng)?, None)
    } else {
        let (i, s) = generate_yes_instance(nv, degree, k, l, &mut rng)?;
        (i, Some(s))
    };
    inst.save(out)?;
    let params = json!({ "nv": nv, "degree": degree, "k": k, "L": l, "planted": !random });
    let mut manifest = RunManifest::new("gen-lc", params, Some(seed.rng_seed())).output(out)?;
    if let (Some(path), Some(sigma)) = (labels_out, sigma) {
        write_json(path, &sigma)?;
        manifest = manifest.output(path)?;
    }
    manifest.write_beside(out)?;
    println!("wrote {} ({} vertices, {} edges)", out.display(), inst.num_vertices(), inst.edges.len());
    Ok(Status::Ok)
}

fn audit_lc(instance: &Path, labels: Option<&Path>, json_out: Option<&Path>) -> Result<Status> {
    let inst = load_instance(instance)?;
    let mut report = serde_json::to_value(inst.audit())?;
    if let Some(lp) = labels {
        let sigma: Labeling = load_json(lp)?;
        report["satisfied_fraction"] = json!(inst.satisfied_fraction(&sigma)?);
    }
    emit(&report, json_out)?;
    Ok(Status::Ok)
}

#[allow(clippy::too_many_arguments)]
fn reduce(
    instance: &Path,
    test: &TestArgs,
    points: usize,
    fold: bool,
    discretize: Option<u32>,
    seed: SeedArgs,
    out: &Path,
    csv: Option<&Path>,
) -> Result<Status> {
    let inst = load_instance(instance)?;
    let params = test.params(inst.k)?.with_discretization(discretize);
    let fb = fold.then(|| build_folding_basis(&inst));
    let (data, dm) = emit_instance(&inst, &params, points, fb.as_ref(), seed.rng_seed(), false)?;
    write_dataset(&data, fs::File::create(out).with_context(|| format!("creating {}", out.display()))?)?;
    let mut manifest = RunManifest::new("reduce", serde_json::to_value(&dm)?, Some(seed.rng_seed()))
        .input(instance)?
        .output(out)?;
    if let Some(c) = csv {
        write_csv(&data, c)?;
        manifest = manifest.output(c)?;
    }
    manifest.write_beside(out)?;
    println!(
        "wrote {} points of dimension {} to {} (T = {}, ε = {:.3e}, log η = {:.3e}, η used = {:.1e})",
        data.len(),
        data.dim(),
        out.display(),
        params.t,
        params.effective_eps(),
        params.log_eta,
        params.eta()
    );
    Ok(Status::Ok)
}

/// `k` from the `reduce` manifest written beside `data`.
fn manifest_k(data: &Path) -> Option<u32> {
    let mut name = data.as_os_str().to_owned();
    name.push(".manifest.json");
    let m: Value = load_json(Path::new(&name)).ok()?;
    m["params"]["k"].as_u64().map(|k| k as u32)
}

fn eval(hypothesis: Option<&Path>, data: &Path, k: Option<u32>, probe: Option<u32>, json_out: Option<&Path>) -> Result<Status> {
    let k = k.or_else(|| manifest_k(data));
    let ds = read_dataset(fs::File::open(data).with_context(|| format!("opening {}", data.display()))?, k)?;
    let report = match (hypothesis, probe) {
        (_, Some(d)) => {
            let (h, summary) = fit_probe(&ds, d)?;
            json!({ "probe": summary, "accuracy": h.accuracy(&ds)?, "hypothesis": h.poly().to_text() })
        }
        (Some(hp), None) => {
            let poly = load_poly(hp)?;
            let degree = poly.degree().max(1);
            let h = PTFHypothesis::new(poly, degree, ds.space)?;
            json!({
                "accuracy": h.accuracy(&ds)?,
                "points": ds.len(),
                "zero_evaluations": h.zero_evaluations(&ds),
                "folded": ds.is_folded(),
            })
        }
        (None, None) => bail!("either --hypothesis or --probe is required"),
    };
    emit(&report, json_out)?;
    Ok(Status::Ok)
}

#[allow(clippy::too_many_arguments)]
fn decode(
    poly: &Path,
    instance: &Path,
    test: &TestArgs,
    r: u32,
    nu_quarter: bool,
    seed: SeedArgs,
    out: &Path,
) -> Result<Status> {
    let inst = load_instance(instance)?;
    let p = load_poly(poly)?;
    let params = test.params(inst.k)?;
    let eps = params.effective_eps();
    let cfg = if nu_quarter {
        DecodeConfig::quarter(eps, r, seed.rng_seed())
    } else {
        DecodeConfig::new(eps, r, seed.rng_seed())
    };
    let (labels, trace) = randomized_partial_labeling(&p, &inst, &params, &cfg, &mut seed.rng_seed().rng())?;
    write_json(out, &labels)?;
    let frac = inst.satisfied_fraction(&labels)?;
    RunManifest::new("decode", json!({ "test": params, "decode": cfg }), Some(seed.rng_seed()))
        .input(poly)?
        .input(instance)?
        .output(out)?
        .write_beside(out)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "labeled": labels.len(),
            "satisfied_fraction": frac,
            "jstar": trace.jstar,
            "dstar": trace.dstar,
        }))?
    );
    Ok(Status::Ok)
}

fn verify(lemma: LemmaArg, trials: usize, seed: u64, json_out: Option<&Path>) -> Result<Status> {
    let report = run_lemma(lemma.id(), trials, RngSeed::new(seed));
    emit(&serde_json::to_value(&report)?, json_out)?;
    Ok(if report.verdict == Verdict::Violated { Status::Failed } else { Status::Ok })
}

fn pipeline(demo: Demo, points: usize, seed: SeedArgs, out_dir: Option<&Path>) -> Result<Status> {
    let Demo::D1 = demo;
    let base = seed.rng_seed();
    let (inst, sigma) = generate_yes_instance(30, 4, 6, 4, &mut base.derive(0).rng())?;
    let params = TestParams::new(1, 0.1, inst.k)?.with_eta(1e-3);
    let fb = build_folding_basis(&inst);
    let (data, dm) = emit_instance(&inst, &params, points, Some(&fb), base.derive(1), false)?;
    let lstar = dictator_linear_form(&inst, &sigma)?;
    let folded = PTFHypothesis::new(
        fb.fold_polynomial(lstar.poly(), inst.k),
        1,
        CoordinateSpace::Folded { dim: fb.dim() as u32 },
    )?;
    let acc = folded.accuracy(&data)?;
    let et = params.eps * params.t as f64;
    let bound = 1.0 - et - 3.0 * (et / points as f64).sqrt();
    let cfg = DecodeConfig::new(params.effective_eps(), 0, base.derive(2));
    let (labels, _) = randomized_partial_labeling(lstar.poly(), &inst, &params, &cfg, &mut base.derive(3).rng())?;
    let frac = inst.satisfied_fraction(&labels)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let ip = dir.join("instance.json");
        let dp = dir.join("data.bin");
        let hp = dir.join("witness.poly");
        let lp = dir.join("labels.json");
        inst.save(&ip)?;
        write_dataset(&data, fs::File::create(&dp)?)?;
        fs::write(&hp, lstar.poly().to_text())?;
        write_json(&lp, &labels)?;
        let mut m = RunManifest::new("pipeline", json!({ "demo": "d1", "dataset": dm }), Some(base));
        for p in [&ip, &dp, &hp, &lp] {
            m = m.output(p)?;
        }
        m.write_beside(&dir.join("pipeline"))?;
    }
    let pass = acc >= bound && frac >= 0.9;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "accuracy": acc,
            "bound": bound,
            "eps": params.eps,
            "T": params.t,
            "folded_dim": fb.dim(),
            "decoded_satisfied_fraction": frac,
            "pass": pass,
        }))?
    );
    Ok(if pass { Status::Ok } else { Status::Failed })
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::GenLc { nv, degree, k, l, random, seed, out, labels_out } => {
            gen_lc(nv, degree, k, l, random, seed, &out, labels_out.as_deref())
        }
        Command::AuditLc { instance, labels, json } => audit_lc(&instance, labels.as_deref(), json.as_deref()),
        Command::Reduce { instance, test, points, fold, discretize, seed, out, csv } => {
            reduce(&instance, &test, points, fold, discretize, seed, &out, csv.as_deref())
        }
        Command::Eval { hypothesis, data, k, probe, json } => {
            eval(hypothesis.as_deref(), &data, k, probe, json.as_deref())
        }
        Command::Decode { poly, instance, test, r, nu_quarter, seed, out } => {
            decode(&poly, &instance, &test, r, nu_quarter, seed, &out)
        }
        Command::Verify { lemma, trials, seed, json } => verify(lemma, trials, seed, json.as_deref()),
        Command::Pipeline { demo, points, seed, out_dir } => pipeline(demo, points, seed, out_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
