//! Command implementations. Each returns a JSON report, an optional table, and a pass flag.

use bochner_core::algebra::Mat2;
use bochner_core::classify::{
    build_pair, certify_point, membership, pair_for_point, scan_family, shift_identity, translate_deform,
    CertConfig, Certificate, ClassPoint, ScanConfig, Tolerances,
};
use bochner_core::darboux::{search, DarbouxSearchConfig};
use bochner_core::ops::DiffOp2;
use bochner_core::quad::WeightFn;
use bochner_core::recurrence::{ad_residuals, generate_ops};
use serde_json::{json, Value};

use crate::input::{self, PairSpec};
use crate::{Cli, CliError, Command, Outcome};

const DEFAULT_KS: [f64; 6] = [-0.5, -0.25, -0.1, 0.1, 0.25, 0.5];
/// Shift identity tolerance at unit `--tol-cert`.
const SHIFT_TOL: f64 = 1e-6;
/// Intertwining tolerance at unit `--tol-cert`.
const INTERTWINE_TOL: f64 = 1e-7;

pub fn dispatch(command: Command, cli: &Cli) -> Result<Outcome, CliError> {
    let doc = input::load(cli.input.as_deref())?;
    match command {
        Command::VerifyPoint => verify_point(cli, &doc),
        Command::BuildFamily => build_family(&doc),
        Command::ScanFamily => scan(cli, &doc),
        Command::Deform => deform(cli, &doc),
        Command::Darboux => darboux(cli, &doc),
        Command::Recurrence => recurrence(cli, &doc),
        Command::Adcheck => adcheck(cli, &doc),
    }
}

fn cert_config(cli: &Cli) -> CertConfig {
    CertConfig { m: cli.m, n_ad: cli.n, tol: Tolerances::default().scaled(cli.tol_cert), ..CertConfig::default() }
}

fn require(doc: &Value) -> Result<(), CliError> {
    if doc.is_null() {
        return Err(CliError::Input("this command needs --input".into()));
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn mat_cells(m: &Mat2) -> Vec<String> {
    m.rows().iter().flatten().map(|&x| num(x)).collect()
}

fn mat_header(name: &str) -> Vec<String> {
    ["11", "12", "21", "22"].iter().map(|ij| format!("{name}_{ij}")).collect()
}

const POINT_HEADER: [&str; 6] = ["family", "a", "b", "c", "d", "lambda"];

fn point_header() -> Vec<String> {
    let mut h: Vec<String> = POINT_HEADER.iter().map(|s| s.to_string()).collect();
    h.extend(mat_header("B0"));
    h
}

fn point_cells(p: &ClassPoint) -> Vec<String> {
    let mut r = vec![p.family.name().to_string(), num(p.a), num(p.b), num(p.c), num(p.d), num(p.lam)];
    r.extend(mat_cells(&p.b0));
    r
}

const CERT_HEADER: [&str; 15] = [
    "membership",
    "symmetry",
    "pearson",
    "aux",
    "second_order",
    "boundary",
    "det_w",
    "ad_z2",
    "ad_z1",
    "ad_z0",
    "b0_roundtrip",
    "positive_definite",
    "quadrature_converged",
    "failures",
    "pass",
];

fn cert_cells(c: &Certificate, tol: &Tolerances) -> Vec<String> {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    vec![
        opt(c.membership),
        num(c.symmetry),
        num(c.ode.pearson),
        num(c.ode.aux),
        num(c.ode.second_order),
        num(c.ode.boundary),
        num(c.det_w),
        num(c.ad_z2),
        num(c.ad_z1),
        num(c.ad_z0),
        opt(c.b0_roundtrip),
        c.positive_definite.to_string(),
        c.quadrature_converged.to_string(),
        c.failures(tol).join(";"),
        c.passes(tol).to_string(),
    ]
}

fn cert_json(c: &Certificate, tol: &Tolerances) -> Value {
    json!({ "values": to_json(c), "failures": c.failures(tol), "passed": c.passes(tol) })
}

fn verify_point(cli: &Cli, doc: &Value) -> Result<Outcome, CliError> {
    require(doc)?;
    let p = input::point(doc)?;
    let cfg = cert_config(cli);
    let mem = membership(&p);
    let member = mem.passes(cfg.tol.membership);
    let mut header = point_header();
    header.extend(CERT_HEADER.iter().map(|s| s.to_string()));
    match certify_point(&p, &cfg) {
        Ok(cert) => {
            let passed = member && cert.passes(&cfg.tol);
            let mut row = point_cells(&p);
            row.extend(cert_cells(&cert, &cfg.tol));
            Ok(Outcome {
                json: json!({ "point": to_json(&p), "membership": to_json(&mem), "certificate": cert_json(&cert, &cfg.tol), "passed": passed }),
                csv: Some(vec![header, row]),
                passed,
            })
        }
        // A non-member whose pair cannot even be built is a certificate failure, not a breakdown.
        Err(e) if !member => {
            let mut row = point_cells(&p);
            row.extend(std::iter::repeat_n(String::new(), CERT_HEADER.len() - 2));
            row.push("membership;construction".into());
            row.push("false".into());
            Ok(Outcome {
                json: json!({ "point": to_json(&p), "membership": to_json(&mem), "error": e.to_string(), "passed": false }),
                csv: Some(vec![header, row]),
                passed: false,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn build_family(doc: &Value) -> Result<Outcome, CliError> {
    require(doc)?;
    let p = input::point(doc)?;
    let pair = build_pair(&p)?;
    let (ea, eb) = pair.weight.exponents();
    let mut header = point_header();
    header.extend(["alpha", "beta", "gamma"].map(String::from));
    let mut row = point_cells(&p);
    row.extend([num(ea), num(eb), num(pair.gamma)]);
    Ok(Outcome { json: json!({ "point": to_json(&p), "pair": to_json(&pair) }), csv: Some(vec![header, row]), passed: true })
}

fn scan(cli: &Cli, doc: &Value) -> Result<Outcome, CliError> {
    require(doc)?;
    let fam = input::family(doc)?;
    let defaults = ScanConfig::default();
    let cfg = ScanConfig {
        count: input::field(doc, "count")?.unwrap_or(defaults.count),
        seed: cli.seed,
        max_draws: input::field(doc, "max_draws")?.unwrap_or(defaults.max_draws),
        batch: defaults.batch,
        cert: cert_config(cli),
    };
    let report = scan_family(fam, &cfg);
    let passed = report.records.len() == cfg.count && report.records.iter().all(|r| r.certificate.passes(&cfg.cert.tol));
    let mut header: Vec<String> = vec!["draw".into()];
    header.extend(fam.parameter_names().iter().map(|s| format!("param_{s}")));
    header.extend(point_header());
    header.extend(CERT_HEADER.iter().map(|s| s.to_string()));
    let mut rows = vec![header];
    for r in &report.records {
        let mut row = vec![r.draw.to_string()];
        row.extend(r.params.iter().map(|&x| num(x)));
        row.extend(point_cells(&r.point));
        row.extend(cert_cells(&r.certificate, &cfg.cert.tol));
        rows.push(row);
    }
    Ok(Outcome {
        json: json!({ "requested": cfg.count, "max_draws": cfg.max_draws, "report": to_json(&report), "passed": passed }),
        csv: Some(rows),
        passed,
    })
}

fn deform(cli: &Cli, doc: &Value) -> Result<Outcome, CliError> {
    require(doc)?;
    let p = input::point(doc)?;
    let ks: Vec<f64> = input::field(doc, "ks")?.unwrap_or_else(|| DEFAULT_KS.to_vec());
    let cfg = cert_config(cli);
    let shift = shift_identity(&p, cli.n, cli.m)?;
    let shift_ok = shift.max() < SHIFT_TOL * cli.tol_cert;
    let mut header: Vec<String> = vec!["k".into()];
    header.extend(point_header());
    header.push("frame_residual".into());
    header.push("membership_own".into());
    header.extend(CERT_HEADER.iter().map(|s| s.to_string()));
    header.push("error".into());
    let mut rows = vec![header];
    let mut entries = Vec::new();
    let mut all_ok = shift_ok;
    for &k in &ks {
        let def = translate_deform(&p, k)?;
        let mem = membership(&def.point);
        let cert = certify_point(&def.point, &cfg);
        let mut row = vec![num(k)];
        row.extend(point_cells(&def.point));
        row.push(num(def.frame_residual));
        row.push(num(mem.own));
        let entry = match &cert {
            Ok(c) => {
                all_ok &= c.passes(&cfg.tol);
                row.extend(cert_cells(c, &cfg.tol));
                row.push(String::new());
                json!({ "k": k, "deformed": to_json(&def), "membership": to_json(&mem), "certificate": cert_json(c, &cfg.tol) })
            }
            Err(e) => {
                all_ok = false;
                row.extend(std::iter::repeat_n(String::new(), CERT_HEADER.len() - 1));
                row.push("false".into());
                row.push(e.to_string());
                json!({ "k": k, "deformed": to_json(&def), "membership": to_json(&mem), "error": e.to_string() })
            }
        };
        entries.push(entry);
        rows.push(row);
    }
    Ok(Outcome {
        json: json!({
            "point": to_json(&p),
            "shift_identity": { "b": shift.b, "c": shift.c, "lambda": shift.lambda, "n_max": cli.n, "passed": shift_ok },
            "deformations": entries,
            "passed": all_ok,
        }),
        csv: Some(rows),
        passed: all_ok,
    })
}

fn darboux(cli: &Cli, doc: &Value) -> Result<Outcome, CliError> {
    let defaults = DarbouxSearchConfig::default();
    let cfg = DarbouxSearchConfig {
        seed: cli.seed,
        count: input::field(doc, "count")?.unwrap_or(defaults.count),
        max_restarts: input::field(doc, "max_restarts")?.unwrap_or(defaults.max_restarts),
        n_intertwine: input::field(doc, "n_intertwine")?.unwrap_or(defaults.n_intertwine),
        cert: cert_config(cli),
        ..defaults
    };
    let report = search(&cfg);
    let intertwine_tol = INTERTWINE_TOL * cli.tol_cert;
    let passed = report.candidates.len() == cfg.count
        && report.candidates.iter().all(|c| c.certificate.passes(&cfg.cert.tol) && c.intertwine < intertwine_tol);
    let mut header: Vec<String> = ["restart", "sign"].map(String::from).to_vec();
    for m in ["S1", "S0", "C", "G"] {
        header.extend(mat_header(m));
    }
    header.extend(
        ["p", "q", "alpha", "beta", "gamma1", "gamma2", "search_residual", "symmetry", "irreducibility", "intertwine", "normalized_family", "family_residual"]
            .map(String::from),
    );
    header.extend(CERT_HEADER.iter().map(|s| s.to_string()));
    let mut rows = vec![header];
    for c in &report.candidates {
        let mut row = vec![c.restart.to_string(), num(c.op.sign)];
        for m in [&c.op.s1, &c.op.s0, &c.op.c, &c.g] {
            row.extend(mat_cells(m));
        }
        let f = &c.factorization;
        row.extend([c.r1.p, c.r1.q, f.alpha[0], f.beta[0], f.gamma[0], f.gamma[1], c.search_residual, c.symmetry, c.irreducibility, c.intertwine].map(num));
        match &c.normalized {
            Some(n) => row.extend([n.point.family.name().to_string(), num(n.family_residual)]),
            None => row.extend([String::new(), String::new()]),
        }
        row.extend(cert_cells(&c.certificate, &cfg.cert.tol));
        rows.push(row);
    }
    Ok(Outcome {
        json: json!({ "requested": cfg.count, "max_restarts": cfg.max_restarts, "report": to_json(&report), "passed": passed }),
        csv: Some(rows),
        passed,
    })
}

fn pair_of(doc: &Value) -> Result<(WeightFn, DiffOp2), CliError> {
    require(doc)?;
    Ok(match PairSpec::parse(doc)? {
        PairSpec::Point(p) => {
            let pair = pair_for_point(&p)?;
            (pair.weight, pair.op)
        }
        PairSpec::Classical { alpha, beta } => PairSpec::classical_pair(alpha, beta),
        PairSpec::Explicit { weight, op } => (weight, op),
    })
}

fn recurrence(cli: &Cli, doc: &Value) -> Result<Outcome, CliError> {
    let (weight, op) = pair_of(doc)?;
    let mu = weight.discretize(cli.m)?;
    let ops = generate_ops(&mu, cli.n)?;
    let mut header: Vec<String> = vec!["n".into()];
    for m in ["B", "C", "M", "Lambda"] {
        header.extend(mat_header(m));
    }
    let mut rows = vec![header];
    let mut table = Vec::new();
    for n in 0..=cli.n {
        let lam = op.lambda(n as f64);
        let mut row = vec![n.to_string()];
        for m in [&ops.b[n], &ops.c[n], &ops.m[n], &lam] {
            row.extend(mat_cells(m));
        }
        rows.push(row);
        table.push(json!({ "n": n, "B": to_json(&ops.b[n]), "C": to_json(&ops.c[n]), "M": to_json(&ops.m[n]), "Lambda": to_json(&lam) }));
    }
    Ok(Outcome {
        json: json!({
            "op": to_json(&op),
            "weight": to_json(&weight),
            "table": table,
            "orthogonality_defect": ops.orthogonality_defect(&mu),
            "three_term_defect": ops.three_term_defect(),
        }),
        csv: Some(rows),
        passed: true,
    })
}

fn adcheck(cli: &Cli, doc: &Value) -> Result<Outcome, CliError> {
    let (weight, op) = pair_of(doc)?;
    let tol = Tolerances::default().scaled(cli.tol_cert);
    let mu = weight.discretize(cli.m)?;
    let ops = generate_ops(&mu, cli.n + 4)?;
    let ad = ad_residuals(&ops.b, &ops.c, &op, cli.n)?;
    let labels = ["Z2", "Z1", "Z0", "Z-1", "Z-2"];
    let mut header: Vec<String> = vec!["n".into()];
    header.extend(labels.iter().map(|l| format!("{l}_relative")));
    header.extend(labels.iter().map(|l| format!("{l}_norm")));
    let mut rows = vec![header];
    let mut table = Vec::new();
    for (n, (z, r)) in ad.z.iter().zip(&ad.relative).enumerate() {
        let mut row = vec![n.to_string()];
        row.extend(r.iter().map(|&x| num(x)));
        row.extend(z.iter().map(|m| num(m.norm_max())));
        rows.push(row);
        let norms: Vec<f64> = z.iter().map(|m| m.norm_max()).collect();
        table.push(json!({ "n": n, "relative": r.to_vec(), "norm": norms }));
    }
    let max: Vec<f64> = (-2..=2).rev().map(|k| ad.max_relative(k)).collect();
    let worst = max.iter().cloned().fold(0.0, f64::max);
    let passed = worst < tol.ad;
    Ok(Outcome {
        json: json!({ "labels": labels, "table": table, "max_relative": max, "tolerance": tol.ad, "passed": passed }),
        csv: Some(rows),
        passed,
    })
}
