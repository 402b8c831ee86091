use std::fmt::{Display, Write};

use super::{LocalType, Protocol, Type};

/// Canonical text of a protocol. Re-parsing the output yields an equal AST.
pub fn print_protocol(p: &Protocol) -> String {
    let mut out = String::new();
    for b in &p.binders {
        let _ = writeln!(out, "Pi {}: {}.", b.name, b.kind);
    }
    let _ = writeln!(out, "nprocs {}.", p.nprocs);
    write_type(&mut out, &p.body, 0);
    out.push('\n');
    out
}

pub fn print_local_type(t: &LocalType) -> String {
    let mut out = String::new();
    write_type(&mut out, t, 0);
    out.push('\n');
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_type<A: Display>(out: &mut String, t: &Type<A>, level: usize) {
    let mut cur = t;
    let mut first = true;
    loop {
        if !first {
            out.push('\n');
        }
        first = false;
        indent(out, level);
        match cur {
            Type::End => {
                out.push_str("end");
                return;
            }
            Type::Prefix(a, k) => {
                let _ = write!(out, "{a}.");
                cur = k;
            }
            Type::Loop { body, cont } => {
                out.push_str("loop(\n");
                write_type(out, body, level + 1);
                out.push_str(").");
                cur = cont;
            }
            Type::Choice { yes, no, cont } => {
                out.push_str("choice(\n");
                write_type(out, yes, level + 1);
                out.push_str(",\n");
                write_type(out, no, level + 1);
                out.push_str(").");
                cur = cont;
            }
        }
    }
}
