//! Command-line front end. Every command returns a JSON document carrying a
//! [`RunManifest`] plus optional files for `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::casestudies::{self, case1, case2, parse_params, Case1Params, Case2Params};
use crate::chain::efficiency;
use crate::error::{Error, Result};
use crate::graph::{almost_sure_region, amec_filter, maec_decompose, mec_decompose, EndComponent};
use crate::model::{build_product, Mdp, ProductMdp, StationaryPolicy, UtilityFn};
use crate::parsers::{parse_dra, parse_model, parse_policy, parse_utility_table, write_dra, write_model, write_policy};
use crate::sim::{acceptance_visits, simulate, RolloutConfig};
use crate::synthesis::{certify, synth_general, Method, SynthOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "effsynth", version, about = "Efficiency-optimal policy synthesis under Rabin tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// End components, accepting end components and the almost-sure region.
    Decompose(Inputs),
    /// Synthesize an epsilon-optimal policy that satisfies the task.
    Synthesize {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        knobs: Knobs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic efficiency and acceptance verdict of a policy.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long = "tol-edge", default_value_t = crate::chain::EDGE_TOL)]
        tol_edge: f64,
    },
    /// Monte-Carlo rollouts of a policy.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long, default_value_t = 16)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a grid-world case study and run synthesis on it.
    Casestudy {
        name: CaseName,
        /// TOML parameter file; defaults are used when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseName {
    Case1,
    Case2,
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub mdp: PathBuf,
    #[arg(long)]
    pub dra: Option<PathBuf>,
    /// `state action reward cost` table; overrides inline blocks.
    #[arg(long)]
    pub rewards: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Knobs {
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value = "es")]
    pub method: Method,
    #[arg(long = "tol-support", default_value_t = crate::lp::SUPPORT_TOL)]
    pub tol_support: f64,
    #[arg(long = "tol-edge", default_value_t = crate::chain::EDGE_TOL)]
    pub tol_edge: f64,
    #[arg(long = "bisection-width", default_value_t = 1e-6)]
    pub bisection_width: f64,
    #[arg(long = "k-margin", default_value_t = 1.0)]
    pub k_margin: f64,
    /// Always perturb, even when the ratio optimum already accepts.
    #[arg(long = "no-shortcut")]
    pub no_shortcut: bool,
}

impl Knobs {
    pub fn options(&self) -> Result<SynthOptions> {
        let o = SynthOptions {
            method: self.method,
            support_tol: self.tol_support,
            edge_tol: self.tol_edge,
            bisection_width: self.bisection_width,
            k_margin: self.k_margin,
            shortcut: !self.no_shortcut,
        };
        o.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Param("epsilon must be strictly positive".into()));
        }
        Ok(o)
    }
}

/// Provenance emitted with every result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    /// SHA-256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, InputHash>,
    pub seed: Option<u64>,
    pub knobs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new() -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: BTreeMap::new(),
            seed: None,
            knobs: BTreeMap::new(),
        }
    }

    pub fn knob(&mut self, key: &str, v: impl Serialize) {
        self.knobs.insert(key.into(), serde_json::to_value(v).expect("knob serializes"));
    }

    fn options(&mut self, o: &SynthOptions) {
        self.knob("method", o.method);
        self.knob("tol_support", o.support_tol);
        self.knob("tol_edge", o.edge_tol);
        self.knob("bisection_width", o.bisection_width);
        self.knob("k_margin", o.k_margin);
        self.knob("shortcut", o.shortcut);
    }
}

impl Default for RunManifest {
    fn default() -> Self {
        Self::new()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A command's result: the JSON document and files for the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub json: Value,
    pub files: Vec<(String, String)>,
}

fn read_input(man: &mut RunManifest, role: &str, path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    man.inputs.insert(
        role.into(),
        InputHash { path: path.display().to_string(), sha256: sha256_hex(&bytes) },
    );
    String::from_utf8(bytes).map_err(|_| Error::parse(0, 0, format!("{} is not UTF-8", path.display())))
}

struct Loaded {
    mdp: Mdp,
    product: Option<ProductMdp>,
    utilities: Option<(UtilityFn, UtilityFn)>,
}

impl Loaded {
    /// The model policies act on: the product if an automaton was given.
    fn target(&self) -> &Mdp {
        self.product.as_ref().map_or(&self.mdp, |p| &p.mdp)
    }

    fn utilities(&self) -> Result<(UtilityFn, UtilityFn)> {
        let (r, c) = self
            .utilities
            .clone()
            .ok_or_else(|| Error::Param("no reward and cost given (inline blocks or --rewards)".into()))?;
        Ok(match &self.product {
            Some(pm) => (pm.lift_utility(&r), pm.lift_utility(&c)),
            None => (r, c),
        })
    }

    fn product(&self) -> Result<&ProductMdp> {
        self.product.as_ref().ok_or_else(|| Error::Param("this command needs --dra".into()))
    }
}

fn load(man: &mut RunManifest, inputs: &Inputs) -> Result<Loaded> {
    let parsed = parse_model(&read_input(man, "mdp", &inputs.mdp)?)?;
    let product = match &inputs.dra {
        Some(p) => Some(build_product(&parsed.mdp, &parse_dra(&read_input(man, "dra", p)?)?)?),
        None => None,
    };
    let utilities = match &inputs.rewards {
        Some(p) => Some(parse_utility_table(&read_input(man, "rewards", p)?, &parsed.mdp)?),
        None => parsed.reward.zip(parsed.cost),
    };
    Ok(Loaded { mdp: parsed.mdp, product, utilities })
}

#[derive(Serialize)]
struct StateActions {
    state: String,
    actions: Vec<String>,
}

fn ec_json(m: &Mdp, ecs: &[EndComponent]) -> Vec<Vec<StateActions>> {
    ecs.iter()
        .map(|ec| {
            ec.act
                .iter()
                .map(|(&s, acts)| StateActions {
                    state: m.state_names[s].clone(),
                    actions: acts.iter().map(|&a| m.action_names[a].clone()).collect(),
                })
                .collect()
        })
        .collect()
}

fn names(m: &Mdp, states: &[usize]) -> Vec<String> {
    states.iter().map(|&s| m.state_names[s].clone()).collect()
}

pub fn cmd_decompose(inputs: &Inputs) -> Result<Output> {
    let mut man = RunManifest::new();
    let l = load(&mut man, inputs)?;
    let pm = l.product()?;
    let amecs = amec_filter(pm);
    if amecs.is_empty() {
        return Err(Error::TaskUnsatisfiable);
    }
    let region = almost_sure_region(pm);
    let json = json!({
        "manifest": man,
        "model": { "mecs": ec_json(&l.mdp, &mec_decompose(&l.mdp)) },
        "product": {
            "states": pm.n_states(),
            "mecs": ec_json(pm, &mec_decompose(pm)),
            "maecs": ec_json(pm, &maec_decompose(pm)),
            "amecs": ec_json(pm, &amecs),
            "almost_sure_region": names(pm, &region),
            "initial_in_region": region.contains(&pm.initial),
        },
    });
    Ok(Output { json, files: Vec::new() })
}

pub fn cmd_synthesize(inputs: &Inputs, knobs: &Knobs) -> Result<Output> {
    let opts = knobs.options()?;
    let mut man = RunManifest::new();
    man.knob("epsilon", knobs.epsilon);
    man.options(&opts);
    let l = load(&mut man, inputs)?;
    let pm = l.product()?;
    let (r, c) = l.utilities()?;
    let rep = synth_general(pm, &r, &c, knobs.epsilon, &opts)?;
    let meta = [
        ("epsilon", knobs.epsilon.to_string()),
        ("method", opts.method.to_string()),
        ("value", rep.value.to_string()),
        ("efficiency", rep.efficiency.to_string()),
    ];
    let policy = write_policy(pm, &rep.policy, &meta);
    let json = json!({ "manifest": man, "report": rep });
    let files = vec![
        ("policy.txt".into(), policy),
        ("report.json".into(), to_pretty(&json)),
    ];
    Ok(Output { json, files })
}

#[derive(Serialize)]
struct ClassJson {
    states: Vec<String>,
    probability: f64,
    ratio: f64,
    accepting: bool,
    in_amec: bool,
}

pub fn cmd_evaluate(inputs: &Inputs, policy: &Path, tol_edge: f64) -> Result<Output> {
    let mut man = RunManifest::new();
    man.knob("tol_edge", tol_edge);
    let l = load(&mut man, inputs)?;
    let pm = l.product()?;
    let (r, c) = l.utilities()?;
    let p = parse_policy(&read_input(&mut man, "policy", policy)?, pm)?;
    let (ca, cert) = certify(pm, &p, &amec_filter(pm), tol_edge)?;
    let ratios = crate::chain::class_ratios(&ca, &r, &c, &p);
    let classes: Vec<ClassJson> = cert
        .classes
        .iter()
        .map(|cc| {
            let k = ca.recurrent_classes.iter().position(|x| x == &cc.states).expect("class");
            ClassJson {
                states: names(pm, &cc.states),
                probability: cc.probability,
                ratio: ratios[k],
                accepting: cc.pair.is_some(),
                in_amec: cc.amec.is_some(),
            }
        })
        .collect();
    let offending: Vec<&ClassJson> = classes.iter().filter(|c| !(c.accepting && c.in_amec)).collect();
    let verdict = if cert.accepted { "almost-sure" } else { "probability<1" };
    let json = json!({
        "manifest": man,
        "efficiency": efficiency(&ca, &r, &c, &p, pm.initial),
        "recurrent_classes": classes,
        "acceptance": {
            "verdict": verdict,
            "probability": cert.acceptance_probability,
            "offending": offending,
        },
    });
    Ok(Output { json, files: Vec::new() })
}

pub fn cmd_simulate(inputs: &Inputs, policy: &Path, cfg: &RolloutConfig) -> Result<Output> {
    cfg.validate()?;
    let mut man = RunManifest::new();
    man.seed = Some(cfg.seed);
    man.knob("steps", cfg.steps);
    man.knob("rollouts", cfg.rollouts);
    let l = load(&mut man, inputs)?;
    let m = l.target();
    let (r, c) = l.utilities()?;
    let p: StationaryPolicy = parse_policy(&read_input(&mut man, "policy", policy)?, m)?;
    let stats = simulate(m, &p, &r, &c, cfg)?;
    let visits = match &l.product {
        Some(pm) => Some(acceptance_visits(pm, &p, cfg)?),
        None => None,
    };
    let mut rollouts_csv = String::from("rollout,ratio\n");
    for (k, x) in stats.ratios.iter().enumerate() {
        rollouts_csv.push_str(&format!("{k},{x}\n"));
    }
    let mut visits_csv = String::from("state,frequency\n");
    for (s, f) in stats.visit_freq.iter().enumerate() {
        visits_csv.push_str(&format!("{},{f}\n", m.state_names[s]));
    }
    let label_freq: BTreeMap<&str, f64> =
        m.prop_names.iter().map(String::as_str).zip(stats.label_freq.iter().copied()).collect();
    let json = json!({
        "manifest": man,
        "mean_ratio": stats.mean_ratio,
        "stderr": stats.stderr,
        "label_freq": label_freq,
        "pair_visits": visits,
    });
    let files = vec![
        ("stats.json".into(), to_pretty(&json)),
        ("rollouts.csv".into(), rollouts_csv),
        ("visits.csv".into(), visits_csv),
    ];
    Ok(Output { json, files })
}

pub fn cmd_casestudy(name: CaseName, params: Option<&Path>, knobs: &Knobs) -> Result<Output> {
    let opts = knobs.options()?;
    let mut man = RunManifest::new();
    man.options(&opts);
    let text = params.map(|p| read_input(&mut man, "params", p)).transpose()?;
    let mut files = Vec::new();
    let json = match name {
        CaseName::Case1 => {
            let params: Case1Params = text.map_or_else(|| Ok(Case1Params::default()), |t| parse_params(&t))?;
            let case = casestudies::gen_case1(&params)?;
            let rep = casestudies::run_case1(&case, &opts)?;
            files.push(("model.txt".into(), write_model(&case.mdp, Some(&case.reward), Some(&case.cost))));
            files.push(("phi1.hoa".into(), write_dra(&case.phi1)));
            files.push(("phi2.hoa".into(), write_dra(&case.phi2)));
            files.push(("table.csv".into(), case1::table_csv(&rep)));
            json!({ "manifest": man, "params": params, "report": rep })
        }
        CaseName::Case2 => {
            let mut params: Case2Params = text.map_or_else(|| Ok(Case2Params::default()), |t| parse_params(&t))?;
            params.epsilon = knobs.epsilon;
            let case = casestudies::gen_case2(&params)?;
            let rep = casestudies::run_case2(&case, &opts)?;
            let reward = case.reward(params.bonus);
            files.push(("model.txt".into(), write_model(&case.mdp, Some(&reward), Some(&case.cost))));
            files.push(("task.hoa".into(), write_dra(&case.dra)));
            files.push(("sweep.csv".into(), case2::sweep_csv(&rep)));
            json!({ "manifest": man, "params": params, "report": rep })
        }
    };
    files.push(("report.json".into(), to_pretty(&json)));
    Ok(Output { json, files })
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

/// Runs a parsed command: prints the JSON document and writes `--out` files.
pub fn run(cli: &Cli) -> Result<String> {
    let (out, dir) = match &cli.command {
        Command::Decompose(inputs) => (cmd_decompose(inputs)?, None),
        Command::Synthesize { inputs, knobs, out } => (cmd_synthesize(inputs, knobs)?, out.as_deref()),
        Command::Evaluate { inputs, policy, tol_edge } => (cmd_evaluate(inputs, policy, *tol_edge)?, None),
        Command::Simulate { inputs, policy, steps, rollouts, seed, out } => {
            let cfg = RolloutConfig { steps: *steps, rollouts: *rollouts, seed: *seed };
            (cmd_simulate(inputs, policy, &cfg)?, out.as_deref())
        }
        Command::Casestudy { name, params, knobs, out } => {
            (cmd_casestudy(*name, params.as_deref(), knobs)?, Some(out.as_path()))
        }
    };
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        for (name, body) in &out.files {
            fs::write(dir.join(name), body)?;
        }
    }
    Ok(to_pretty(&out.json))
}
