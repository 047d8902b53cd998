//! Report serialization: JSON with 17 significant digits, or CSV tables.

use std::io::Write;

use serde_json::{json, Number, Value};

use crate::{Cli, CliError, Command, Format, Outcome};

pub const SCHEMA: &str = "bochner-forge/1";

fn command_name(c: Command) -> &'static str {
    match c {
        Command::VerifyPoint => "verify-point",
        Command::BuildFamily => "build-family",
        Command::ScanFamily => "scan-family",
        Command::Deform => "deform",
        Command::Darboux => "darboux",
        Command::Recurrence => "recurrence",
        Command::Adcheck => "adcheck",
    }
}

/// Rewrites every non-integer number as `{:.16e}`; non-finite values become strings.
fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_i64() || n.is_u64() => Value::Number(n),
        Value::Number(n) => match n.as_f64() {
            Some(x) if x.is_finite() => Value::Number(format!("{x:.16e}").parse::<Number>().expect("finite float")),
            Some(x) => Value::String(x.to_string()),
            None => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

fn render(cli: &Cli, command: Command, outcome: &Outcome) -> Result<Vec<u8>, CliError> {
    match cli.format {
        Format::Json => {
            let doc = json!({
                "schema": SCHEMA,
                "command": command_name(command),
                "config": { "m": cli.m, "N": cli.n, "tol_cert": cli.tol_cert, "seed": cli.seed },
                "passed": outcome.passed,
                "result": outcome.json.clone(),
            });
            let mut bytes = serde_json::to_vec_pretty(&canonical(doc)).map_err(|e| CliError::Config(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        Format::Csv => {
            let rows = outcome.csv.as_ref().ok_or_else(|| CliError::Config(format!("{} has no CSV form", command_name(command))))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.write_record(r).map_err(|e| CliError::Io(e.into()))?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.into_error()))
        }
    }
}

pub fn write(cli: &Cli, command: Command, outcome: &Outcome) -> Result<(), CliError> {
    let bytes = render(cli, command, outcome)?;
    match &cli.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}
