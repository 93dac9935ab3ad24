//! Subcommand implementations. Each returns `Ok(pass)`; errors carry their
//! exit status through [`crate::exit_code`].

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use utilmax_core::market::{
    entropy, is_martingale_measure, kl_divergence, levy_moment_check, martingale_polytope, sigma_localize,
    wealth_process, LevyFamily, LocalizeOptions, MartingalePolytope, MeasureQ, MomentCriterion, PathSample,
    PredictableSet, ScenarioTree, Strategy,
};
use utilmax_core::orlicz::{luxemburg_norm, WeightedSample, YoungFunction};
use utilmax_core::solvers::{
    duality_certificate, solve_dual, solve_instance, solve_primal, DualSolution, DualStart, PrimalMethod,
    PrimalSolution, SolverOptions, Tolerances,
};
use utilmax_core::utility::UtilityFunction;
use utilmax_core::verify::{chain_rows, check_supermartingale, quantifier_measures, CheckReport};
use utilmax_core::{Error, Result};

use crate::report::{cell, certificate_json, check_json, csv_table, flatten, num, nums, read_num, read_nums};
use crate::{Cli, Command, Common, Format};

pub fn run(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    if !(c.tol > 0.0 && c.tol.is_finite()) {
        return Err(Error::Domain(format!("--tol must be positive, got {}", c.tol)));
    }
    let opts = SolverOptions {
        tol: Tolerances { value_abs: c.tol, value_rel: c.tol, ..Tolerances::default() },
        seed: c.seed,
        ..SolverOptions::default()
    };
    match &cli.command {
        Command::Solve => solve(c, &opts),
        Command::Dual => dual(c, &opts),
        Command::Verify { report } => verify(c, &opts, report.as_deref()),
        Command::Polytope => polytope(c, &opts),
        Command::Entropy { y, measure } => entropy_cmd(c, &opts, *y, measure.as_deref()),
        Command::Norm { samples, young } => norm(c, samples, young),
        Command::Localize { samples, young, sets } => localize(c, samples, young, sets),
        Command::LevyCheck { family, moment } => levy(c, family, moment),
        Command::Curves { from, to, step } => curves(c, &opts, *from, *to, *step),
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Domain(format!("{flag} is required")))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_market(c: &Common) -> Result<ScenarioTree> {
    let path = required(&c.market, "--market")?;
    ScenarioTree::from_json(&read(path)?).map_err(|e| match e {
        Error::InvalidMarket(m) => Error::InvalidMarket(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_polytope(tree: &ScenarioTree, opts: &SolverOptions) -> Result<MartingalePolytope> {
    let poly = martingale_polytope(tree, &opts.polytope)?;
    if poly.is_empty() {
        return Err(Error::Arbitrage("the martingale polytope is empty".into()));
    }
    Ok(poly)
}

fn write_out(c: &Common, text: &str) -> Result<()> {
    match &c.out {
        Some(p) => fs::write(p, text)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit(c: &Common, doc: &Value) -> Result<()> {
    match c.format {
        Format::Json => write_out(c, &format!("{}\n", serde_json::to_string_pretty(doc)?)),
        Format::Csv => write_out(c, &csv_table(&["key", "value"], flatten(doc).into_iter().map(|(k, v)| vec![k, v]))?),
    }
}

/// Splits `name:k=v,k=v` into its name and parameters.
fn params(spec: &str) -> Result<(&str, Vec<(&str, f64)>)> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let kv = rest
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Domain(format!("`{spec}`: expected key=value, got `{kv}`")))?;
            let v = v.trim().parse().map_err(|_| Error::Domain(format!("`{spec}`: `{k}` is not a number")))?;
            Ok((k.trim(), v))
        })
        .collect::<Result<_>>()?;
    Ok((name.trim(), kv))
}

fn param(spec: &str, kv: &[(&str, f64)], key: &str) -> Result<f64> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Domain(format!("`{spec}`: missing `{key}`")))
}

fn parse_young(spec: &str, c: &Common) -> Result<YoungFunction> {
    let (name, kv) = params(spec)?;
    match name {
        "power" => YoungFunction::power(param(spec, &kv, "p")?),
        "cosh" => Ok(YoungFunction::CoshMinusOne),
        "indicator" => Ok(YoungFunction::UnitBallIndicator),
        "induced" => Ok(YoungFunction::induce(&required(&c.utility, "--utility")?.parse()?)),
        _ => Err(Error::Domain(format!("unknown Young function `{spec}`"))),
    }
}

fn solution_json(spec: &str, x: f64, tree: &ScenarioTree, primal: &PrimalSolution, dual: &DualSolution) -> Value {
    json!({
        "utility": spec,
        "wealth": num(x),
        "value": num(primal.value),
        "dual_value": num(dual.value),
        "y_hat": num(dual.y_hat),
        "q_hat": nums(&dual.q_hat.probs()),
        "f_hat": nums(&primal.terminal_wealth),
        "H": nums(&primal.strategy.to_flat(tree)),
        "method": serde_json::to_value(primal.method).expect("enum serializes"),
        "signed": dual.signed,
    })
}

fn leaf_table(tree: &ScenarioTree, primal: &PrimalSolution, dual: &DualSolution) -> Result<String> {
    let q = dual.q_hat.probs();
    let rows = tree.leaf_nodes().iter().enumerate().map(|(w, &n)| {
        vec![
            tree.node(n).id.to_string(),
            cell(tree.node(n).prob),
            cell(q[w]),
            cell(primal.terminal_wealth[w]),
            cell(dual.z[w]),
        ]
    });
    csv_table(&["node", "p", "q_hat", "f_hat", "z"], rows)
}

fn solve(c: &Common, opts: &SolverOptions) -> Result<bool> {
    let tree = load_market(c)?;
    let spec = required(&c.utility, "--utility")?;
    let u: UtilityFunction = spec.parse()?;
    let x = *required(&c.wealth, "--wealth")?;
    load_polytope(&tree, opts)?;
    let inst = solve_instance(&tree, &u, x, opts)?;
    match c.format {
        Format::Json => {
            let mut doc = solution_json(spec, x, &tree, &inst.primal, &inst.dual);
            doc["certificate"] = certificate_json(&inst.certificate);
            emit(c, &doc)?;
        }
        Format::Csv => write_out(c, &leaf_table(&tree, &inst.primal, &inst.dual)?)?,
    }
    Ok(inst.certificate.passed)
}

fn dual(c: &Common, opts: &SolverOptions) -> Result<bool> {
    let tree = load_market(c)?;
    let spec = required(&c.utility, "--utility")?;
    let u: UtilityFunction = spec.parse()?;
    let x = *required(&c.wealth, "--wealth")?;
    let poly = load_polytope(&tree, opts)?;
    let d = solve_dual(&poly, &u, x, opts)?;
    let doc = json!({
        "utility": spec,
        "wealth": num(x),
        "value": num(d.value),
        "y_hat": num(d.y_hat),
        "q_hat": nums(&d.q_hat.probs()),
        "z": nums(&d.z),
        "iterations": d.iterations,
        "signed": d.signed,
    });
    emit(c, &doc)?;
    Ok(true)
}

/// Rebuilds the primal/dual pair stored in a `solve` report.
fn pair_from_report(doc: &Value, tree: &ScenarioTree) -> Result<(PrimalSolution, DualSolution)> {
    let leaves = tree.leaf_count();
    let field = |k: &str| doc.get(k).ok_or_else(|| Error::Domain(format!("report field `{k}` is missing")));
    let sized = |k: &str, n: usize| -> Result<Vec<f64>> {
        let v = read_nums(field(k)?, k)?;
        if v.len() != n {
            return Err(Error::Domain(format!("report field `{k}` has {} entries, expected {n}", v.len())));
        }
        Ok(v)
    };
    let f_hat = sized("f_hat", leaves)?;
    let q_hat = sized("q_hat", leaves)?;
    let h = sized("H", tree.strategy_dim())?;
    let method: PrimalMethod = serde_json::from_value(field("method")?.clone())?;
    let signed = field("signed")?.as_bool().unwrap_or(false);
    let y_hat = read_num(field("y_hat")?, "y_hat")?;
    let p = tree.leaf_probs();
    let density: Vec<f64> = q_hat.iter().zip(&p).map(|(&q, &p)| if p > 0.0 { q / p } else { 0.0 }).collect();
    let q = if signed { MeasureQ::signed(&p, density)? } else { MeasureQ::from_density(&p, density)? };
    let primal = PrimalSolution {
        strategy: Strategy::from_flat(tree, &h),
        terminal_wealth: f_hat,
        value: read_num(field("value")?, "value")?,
        iterations: 0,
        grad_norm: 0.0,
        method,
    };
    let dual = DualSolution {
        y_hat,
        z: q.density().iter().map(|d| y_hat * d).collect(),
        q_hat: q,
        value: read_num(field("dual_value")?, "dual_value")?,
        iterations: 0,
        start: DualStart::Warm,
        signed,
    };
    Ok((primal, dual))
}

fn single(name: &str, tol: f64, location: &str, residual: f64) -> CheckReport {
    let mut r = CheckReport::new(name, tol);
    r.push(location, residual);
    r
}

/// Every check applicable to a solved instance.
#[allow(clippy::too_many_arguments)]
fn check_bundle(
    tree: &ScenarioTree,
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    primal: &PrimalSolution,
    dual: &DualSolution,
    cold_value: f64,
    opts: &SolverOptions,
) -> Vec<CheckReport> {
    let tol = &opts.tol;
    let cert = duality_certificate(tree, poly, u, x, primal, dual, Some(cold_value), opts);
    let satiated = u.bliss().is_finite() && x >= u.bliss();
    let mut out = vec![
        single("duality-gap", tol.gap_rel * (1.0 + primal.value.abs()), "dual - primal", cert.gap.abs()),
        single("fenchel", tol.value_abs, "max over terminal nodes", cert.fenchel_residual),
        single("budget", tol.value_abs, "E_Q_hat[f_hat] - x", cert.budget_residual.abs()),
    ];
    let mut slack = CheckReport::new("vertex-budget", tol.value_abs);
    for (i, s) in cert.vertex_slacks.iter().enumerate() {
        slack.push(format!("vertex {i}"), -s);
    }
    for (i, s) in cert.mixture_slacks.iter().enumerate() {
        slack.push(format!("mixture {i}"), -s);
    }
    out.push(slack);
    let measures = quantifier_measures(poly, opts.seed, opts.mixtures);
    out.push(check_supermartingale(tree, &wealth_process(tree, &primal.strategy, x), &measures, tol.value_abs));
    out.push(single(
        "dual-agreement",
        tol.value_abs + tol.value_rel * dual.value.abs(),
        "warm vs cold",
        cert.dual_agreement,
    ));
    // at or above the bliss point only the degenerate-regime checks apply
    if !satiated {
        out.push(single("replication", tol.value_abs * (1.0 + x.abs()), "hedging error", cert.recovery_residual));
        let mut chain = CheckReport::new("value-chain", tol.value_abs);
        chain_rows(&mut chain, poly, u, x, primal.value);
        out.push(chain);
    }
    out.push(cert.satiation);
    out
}

fn verify(c: &Common, opts: &SolverOptions, report: Option<&Path>) -> Result<bool> {
    let tree = load_market(c)?;
    let poly = load_polytope(&tree, opts)?;
    let (spec, x, primal, dual) = match report {
        Some(path) => {
            let doc: Value = serde_json::from_str(&read(path)?)
                .map_err(|e| Error::Domain(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column())))?;
            let spec = match (&c.utility, doc.get("utility").and_then(Value::as_str)) {
                (Some(s), _) => s.clone(),
                (None, Some(s)) => s.to_string(),
                (None, None) => return Err(Error::Domain("no utility in the report and no --utility".into())),
            };
            let x = match (c.wealth, doc.get("wealth")) {
                (Some(x), _) => x,
                (None, Some(v)) => read_num(v, "wealth")?,
                (None, None) => return Err(Error::Domain("no wealth in the report and no --wealth".into())),
            };
            let (p, d) = pair_from_report(&doc, &tree)?;
            (spec, x, p, d)
        }
        None => {
            let spec = required(&c.utility, "--utility")?.clone();
            let x = *required(&c.wealth, "--wealth")?;
            let u: UtilityFunction = spec.parse()?;
            let primal = solve_primal(&tree, &poly, &u, x, opts)?;
            let dual = utilmax_core::solvers::solve_dual_warm(&poly, &u, x, &primal, opts)?;
            (spec, x, primal, dual)
        }
    };
    let u: UtilityFunction = spec.parse()?;
    let cold = solve_dual(&poly, &u, x, opts)?;
    let checks = check_bundle(&tree, &poly, &u, x, &primal, &dual, cold.value, opts);
    let pass = checks.iter().all(|r| r.pass);
    match c.format {
        Format::Json => {
            let doc = json!({
                "utility": spec,
                "wealth": num(x),
                "pass": pass,
                "checks": checks.iter().map(check_json).collect::<Vec<_>>(),
            });
            write_out(c, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
        }
        Format::Csv => {
            let rows = checks.iter().flat_map(|r| {
                r.rows.iter().map(|row| vec![r.name.clone(), row.location.clone(), cell(row.residual), row.pass.to_string()])
            });
            write_out(c, &csv_table(&["check", "location", "residual", "pass"], rows)?)?;
        }
    }
    Ok(pass)
}

fn polytope(c: &Common, opts: &SolverOptions) -> Result<bool> {
    let tree = load_market(c)?;
    let poly = martingale_polytope(&tree, &opts.polytope)?;
    let probs = |q: &MeasureQ| nums(&q.probs());
    let doc = json!({
        "leaves": tree.leaf_nodes().iter().map(|&n| tree.node(n).id).collect::<Vec<_>>(),
        "p": nums(poly.leaf_probs()),
        "constraints": poly.constraints.iter().map(|k| json!({
            "node": k.node,
            "asset": k.asset,
            "coeffs": nums(&k.coeffs),
        })).collect::<Vec<_>>(),
        "vertices": poly.vertices().map(|v| v.iter().map(probs).collect::<Vec<_>>()),
        "interior": poly.interior().map(probs),
        "has_equivalent": poly.has_equivalent(),
        "empty": poly.is_empty(),
    });
    match c.format {
        Format::Json => emit(c, &doc)?,
        Format::Csv => {
            let mut rows = Vec::new();
            for k in &poly.constraints {
                for (w, &a) in k.coeffs.iter().enumerate() {
                    rows.push(vec!["constraint".into(), format!("{}:{}", k.node, k.asset), w.to_string(), cell(a)]);
                }
            }
            for (i, v) in poly.vertices().unwrap_or(&[]).iter().enumerate() {
                for (w, q) in v.probs().iter().enumerate() {
                    rows.push(vec!["vertex".into(), i.to_string(), w.to_string(), cell(*q)]);
                }
            }
            write_out(c, &csv_table(&["kind", "index", "leaf", "value"], rows)?)?;
        }
    }
    if poly.is_empty() {
        return Err(Error::Arbitrage("the martingale polytope is empty".into()));
    }
    Ok(true)
}

fn entropy_cmd(c: &Common, opts: &SolverOptions, y: f64, measure: Option<&str>) -> Result<bool> {
    let tree = load_market(c)?;
    let u: UtilityFunction = required(&c.utility, "--utility")?.parse()?;
    let p = tree.leaf_probs();
    let measures = match measure {
        Some(text) => {
            let q: Vec<f64> = text
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::Domain(format!("--measure: `{s}` is not a number"))))
                .collect::<Result<_>>()?;
            vec![MeasureQ::from_probs(&p, &q)?]
        }
        None => {
            let poly = load_polytope(&tree, opts)?;
            match poly.vertices() {
                Some(v) => v.to_vec(),
                None => poly.interior().into_iter().cloned().collect(),
            }
        }
    };
    let rows: Vec<Value> = measures
        .iter()
        .enumerate()
        .map(|(i, q)| {
            json!({
                "index": i,
                "q": nums(&q.probs()),
                "entropy": num(entropy(q, &u, y)),
                "kl": num(kl_divergence(q)),
                "martingale_residual": num(is_martingale_measure(&tree, q, opts.tol.feasibility).max_residual),
            })
        })
        .collect();
    emit(c, &json!({ "y": num(y), "measures": rows }))?;
    Ok(true)
}

fn norm(c: &Common, samples: &Path, young: &str) -> Result<bool> {
    let psi = parse_young(young, c)?;
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in read(samples)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidSample(format!("{}: line {}: {e}", samples.display(), i + 1)))?;
        match fields[..] {
            [v] => {
                values.push(v);
                weights.push(1.0);
            }
            [v, w] => {
                values.push(v);
                weights.push(w);
            }
            _ => {
                return Err(Error::InvalidSample(format!(
                    "{}: line {}: expected `value[,weight]`",
                    samples.display(),
                    i + 1
                )))
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let sample = WeightedSample::new(values, weights.iter().map(|w| w / total).collect())?;
    let n = luxemburg_norm(&psi, &sample)?;
    emit(c, &json!({ "norm": num(n.value), "modular": num(n.modular), "iterations": n.iterations }))?;
    Ok(true)
}

fn parse_set(s: &str) -> Result<PredictableSet> {
    let s = s.trim();
    if s == "all" {
        return Ok(PredictableSet::All);
    }
    let bad = || Error::Domain(format!("predictable set `{s}`: expected `all`, `max=K` or `upto=M`"));
    let (k, v) = s.split_once('=').ok_or_else(bad)?;
    match k.trim() {
        "max" => Ok(PredictableSet::RunningMaxAtMost(v.trim().parse().map_err(|_| bad())?)),
        "upto" => Ok(PredictableSet::UpToTime(v.trim().parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

fn localize(c: &Common, samples: &Path, young: &str, sets: &[String]) -> Result<bool> {
    let psi = parse_young(young, c)?;
    let sample = PathSample::parse(&read(samples)?)
        .map_err(|e| Error::InvalidSample(format!("{}: {e}", samples.display())))?;
    let sets: Vec<PredictableSet> = sets.iter().map(|s| parse_set(s)).collect::<Result<_>>()?;
    let l = sigma_localize(&sample, &psi, &sets, &LocalizeOptions::default())?;
    let doc = json!({
        "c": nums(&l.c),
        "halvings": l.halvings,
        "b": nums(&l.b),
        "d": nums(&l.d),
        "h": num(l.h),
        "phi_min": num(l.phi_min),
        "phi_max": num(l.phi_max),
        "localized_moment": num(l.localized_moment),
        "series": num(l.series),
        "limit": num(l.limit),
        "holds": l.holds,
    });
    emit(c, &doc)?;
    Ok(l.holds)
}

fn levy(c: &Common, family: &str, moment: &str) -> Result<bool> {
    let (name, kv) = params(family)?;
    let fam = match name {
        "dexp" => LevyFamily::DoubleExponential {
            intensity: param(family, &kv, "intensity")?,
            p_up: param(family, &kv, "p_up")?,
            eta: param(family, &kv, "eta")?,
        },
        "gauss" => LevyFamily::GaussianJumps {
            intensity: param(family, &kv, "intensity")?,
            mean: param(family, &kv, "mean")?,
            sd: param(family, &kv, "sd")?,
        },
        "stable" => LevyFamily::StableTail { alpha: param(family, &kv, "alpha")?, scale: param(family, &kv, "scale")? },
        _ => return Err(Error::Domain(format!("unknown Lévy family `{family}`"))),
    };
    let bad = || Error::Domain(format!("moment `{moment}`: expected `exp=LAMBDA` or `power=P`"));
    let (k, v) = moment.split_once('=').ok_or_else(bad)?;
    let v: f64 = v.trim().parse().map_err(|_| bad())?;
    let criterion = match k.trim() {
        "exp" => MomentCriterion::ExpMoment(v),
        "power" => MomentCriterion::PowerMoment(v),
        _ => return Err(bad()),
    };
    let verdict = levy_moment_check(&fam, criterion)?;
    let doc = json!({
        "finite": verdict.finite,
        "integral": verdict.integral.map(num),
        "numeric_agrees": verdict.numeric_agrees,
    });
    emit(c, &doc)?;
    Ok(verdict.numeric_agrees)
}

fn curves(c: &Common, opts: &SolverOptions, from: f64, to: f64, step: f64) -> Result<bool> {
    let tree = load_market(c)?;
    let u: UtilityFunction = required(&c.utility, "--utility")?.parse()?;
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() {
        return Err(Error::Domain("curves need finite --from/--to and a positive --step".into()));
    }
    let count = if to < from { 0 } else { ((to - from) / step + 1e-9).floor() as usize + 1 };
    let mut rows = Vec::with_capacity(count);
    let mut pass = true;
    if count > 0 {
        let poly = load_polytope(&tree, opts)?;
        for k in 0..count {
            let x = from + k as f64 * step;
            let primal = solve_primal(&tree, &poly, &u, x, opts)?;
            let dual = solve_dual(&poly, &u, x, opts)?;
            pass &= (dual.value - primal.value).abs() <= opts.tol.gap_rel * (1.0 + primal.value.abs());
            rows.push([x, primal.value, dual.value, dual.y_hat]);
        }
    }
    // always CSV: the output is plot data
    let text = csv_table(&["x", "u_primal", "u_dual", "y_hat"], rows.iter().map(|r| r.iter().map(|&v| cell(v)).collect()))?;
    write_out(c, &text)?;
    Ok(pass)
}
