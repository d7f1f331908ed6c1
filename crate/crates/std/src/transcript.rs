//! Plain-text run transcripts.
//!
//! Three blocks, each line tab separated:
//!
//! ```text
//! # charter transcript v1
//! config  <key>   <value>          one line per echoed setting
//! message <round> <client> <stage> <bits>
//! summary <key>   <value>
//! ```
//!
//! `stage` is `learning` (round `0..K-1`; a null message has 1 bit) or
//! `verification` (round `K`, one message per client covering all `K + 1`
//! iterates). Summary keys: `k_star`, `cc_bits`, `null_messages`,
//! `excess_risk` (empty when unavailable) and `output` (comma separated).

use std::fmt::Write as _;
use std::io::{self, Write};

use charter_core::orchestrator::RunTranscript;

pub const MAGIC: &str = "# charter transcript v1";

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Renders `t`, echoing `problem` and the derived parameters in the header.
pub fn render(problem: &str, t: &RunTranscript) -> String {
    let p = &t.params;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let config: [(&str, String); 19] = [
        ("problem", problem.to_string()),
        ("seed", t.seed.to_string()),
        ("d", p.inputs.d.to_string()),
        ("M", p.inputs.m.to_string()),
        ("N", p.inputs.n.to_string()),
        ("R", p.inputs.r.to_string()),
        ("sigma_g", p.inputs.sigma_g.to_string()),
        ("sigma_f", p.inputs.sigma_f.to_string()),
        ("gamma", p.gamma.to_string()),
        ("eps", p.privacy.eps.to_string()),
        ("delta", p.privacy.delta.to_string()),
        ("delta_err", p.privacy.delta_err.to_string()),
        ("K", p.k.to_string()),
        ("G0", p.g0.to_string()),
        ("G1", p.g1.to_string()),
        ("D0", p.d0.to_string()),
        ("D1", p.d1.to_string()),
        ("J0", p.j0.to_string()),
        ("J1", p.j1.to_string()),
    ];
    for (k, v) in config {
        let _ = writeln!(s, "config\t{k}\t{v}");
    }
    for g in &t.gradient_messages {
        let _ = writeln!(
            s,
            "message\t{}\t{}\tlearning\t{}",
            g.round, g.client, g.bits
        );
    }
    for l in &t.loss_messages {
        let _ = writeln!(
            s,
            "message\t{}\t{}\tverification\t{}",
            p.k, l.client, l.bits
        );
    }
    let _ = writeln!(s, "summary\tk_star\t{}", t.k_star);
    let _ = writeln!(s, "summary\tcc_bits\t{}", t.cc_bits);
    let _ = writeln!(s, "summary\tnull_messages\t{}", t.null_messages);
    let _ = writeln!(
        s,
        "summary\texcess_risk\t{}",
        t.excess_risk.map(|v| v.to_string()).unwrap_or_default()
    );
    let _ = writeln!(s, "summary\toutput\t{}", join(&t.output));
    s
}

pub fn write<W: Write>(mut out: W, problem: &str, t: &RunTranscript) -> io::Result<()> {
    out.write_all(render(problem, t).as_bytes())
}

/// Message lines `(round, client, stage, bits)` of a rendered transcript.
pub fn parse_messages(text: &str) -> Result<Vec<(usize, usize, String, u64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err("missing transcript header".into());
    }
    lines
        .filter(|l| l.starts_with("message\t"))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(format!("malformed message line `{l}`"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|e| format!("`{l}`: {e}"));
            Ok((
                num(f[1])? as usize,
                num(f[2])? as usize,
                f[3].to_string(),
                num(f[4])?,
            ))
        })
        .collect()
}

/// The value of a `summary` key.
pub fn summary_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| {
        let mut f = l.splitn(3, '\t');
        (f.next() == Some("summary") && f.next() == Some(key)).then(|| f.next().unwrap_or(""))
    })
}
