//! LP-format text of a model.

use std::fmt::Write;

use crate::model::{IlpModel, Sense, VarId};

const TERMS_PER_LINE: usize = 8;

fn write_terms(out: &mut String, names: &[String], terms: &[(VarId, i128)]) {
    for (n, &(v, c)) in terms.iter().enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0 { '-' } else { '+' };
        match c.unsigned_abs() {
            1 => write!(out, " {sign} {}", names[v]).unwrap(),
            m => write!(out, " {sign} {m} {}", names[v]).unwrap(),
        }
    }
}

/// Objective, rows `c<k>`, bounds and binaries. Identical models give
/// identical text.
pub fn export_lp(model: &IlpModel) -> String {
    let names: Vec<String> = model.vars.iter().map(|v| v.name()).collect();
    let mut out = String::new();
    writeln!(
        out,
        "\\ time table, iteration {}, {} method, hyperperiod {}, M = {}",
        model.iteration, model.method, model.hyperperiod, model.big_m
    )
    .unwrap();
    out.push_str("Maximize\n obj:");
    write_terms(&mut out, &names, &model.objective);
    out.push_str("\nSubject To\n");
    for (k, row) in model.rows.iter().enumerate() {
        write!(out, " c{k}:").unwrap();
        write_terms(&mut out, &names, &row.terms);
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        writeln!(out, " {sense} {}", row.rhs).unwrap();
    }
    out.push_str("Bounds\n");
    for (var, name) in model.vars.iter().zip(&names) {
        if !var.is_binary() {
            writeln!(out, " {} <= {name} <= {}", var.lower, var.upper).unwrap();
        }
    }
    out.push_str("Binaries\n");
    for (var, name) in model.vars.iter().zip(&names) {
        if var.is_binary() {
            writeln!(out, " {name}").unwrap();
        }
    }
    out.push_str("End\n");
    out
}
