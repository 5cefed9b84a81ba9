//! JSON and CSV renderings. Floats are written as decimal strings with 17
//! significant digits so that files compare byte for byte.

use serde_json::{json, Value};
use torsionlab_core::spectral::HeatTraceSample;
use torsionlab_core::torsion::{
    ExponentMap, FluxContinuity, PartitionLedger, RelativeSweep, SuiteReport, Sweep, TorsionValue,
};
use torsionlab_core::zeta::ZetaResult;

use crate::error::CliResult;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn zeta_json(z: &ZetaResult) -> Value {
    json!({
        "grade": z.grade,
        "zeta0": num(z.zeta0),
        "zeta_prime0": num(z.zeta_prime0),
        "log_det_prime": num(z.log_det_prime),
        "residue0": num(z.residue0),
        "err": num(z.err),
    })
}

pub fn torsion_json(t: &TorsionValue) -> Value {
    json!({
        "log_tau": num(t.log_tau),
        "basis_note": t.basis_note,
        "acyclic": t.acyclic,
        "b0": t.b0,
        "b1": t.b1,
        "err": num(t.err),
    })
}

pub fn suite_json(r: &SuiteReport) -> Value {
    json!({
        "suite": r.suite,
        "spec": r.spec,
        "samples": r.samples,
        "max_deviation": num(r.max_deviation),
        "tolerance": num(r.tolerance),
        "pass": r.pass,
    })
}

fn exponents_json(m: &ExponentMap) -> Value {
    Value::Object(
        m.iter().map(|(k, v)| (k.to_string(), Value::String(format!("{}/{}", v.numer(), v.denom())))).collect(),
    )
}

pub fn ledger_json(l: &PartitionLedger) -> Value {
    let disc: Vec<Value> = l
        .discrepancies
        .iter()
        .map(|(c, m)| json!({ "convention": format!("{c:?}"), "discrepancy": exponents_json(m) }))
        .collect();
    json!({
        "l": l.l,
        "log_tau_h": num(l.log_tau_h),
        "log_tau_0": num(l.log_tau_0),
        "log_Z": num(l.log_z),
        "ghost_exponents_lhs": exponents_json(&l.ghost_exponents_lhs),
        "ghost_exponents_rhs": exponents_json(&l.ghost_exponents_rhs),
        "discrepancies": disc,
    })
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| crate::error::CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| crate::error::CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| crate::error::CliError::Io(e.to_string()))
}

pub fn heat_trace_csv(samples: &[HeatTraceSample]) -> CliResult<Vec<u8>> {
    csv_bytes(
        &["t", "tr0", "tr1", "trD0", "trD1", "str", "tail_bound"],
        samples
            .iter()
            .map(|s| [s.t, s.tr0, s.tr1, s.tr_d0, s.tr_d1, s.str, s.tail_bound].iter().map(|&x| num(x)).collect()),
    )
}

pub fn sweep_csv(s: &Sweep) -> CliResult<Vec<u8>> {
    csv_bytes(&["s", "log_tau", "err"], s.rows.iter().map(|r| vec![num(r.s), num(r.log_tau), num(r.err)]))
}

pub fn relative_sweep_csv(s: &RelativeSweep) -> CliResult<Vec<u8>> {
    csv_bytes(
        &["s", "log_tau1", "log_tau2", "log_ratio", "err"],
        s.rows.iter().map(|r| [r.s, r.log_tau1, r.log_tau2, r.log_ratio, r.err].iter().map(|&x| num(x)).collect()),
    )
}

pub fn flux_csv(f: &FluxContinuity) -> CliResult<Vec<u8>> {
    csv_bytes(&["eps", "delta_log_tau", "err"], f.rows.iter().map(|r| vec![num(r.0), num(r.1), num(r.2)]))
}
