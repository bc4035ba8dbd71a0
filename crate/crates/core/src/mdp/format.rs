//! Plain-text MDP definition files.
//!
//! ```text
//! [meta]
//! n_states = 2
//! n_actions = 1
//! gamma = 0.5
//! initial_state = 0
//! [reward]
//! 1 0 1.0            # s a r      (missing pairs default to 0)
//! [transition]
//! 0 0 1 1.0          # s a s' p   (missing entries default to 0)
//! 1 0 1 1.0
//! [features]
//! feature 0 0 1.0 0.0
//! feature 1 0 0.0 1.0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::MdpSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parsed definition file: the MDP plus optional per-pair feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpFile<T> {
    pub mdp: MdpSpec<T>,
    pub features: Option<Vec<Vec<T>>>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Meta,
    Reward,
    Transition,
    Features,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn field<F: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<F> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

pub fn parse_mdp_file<T: Scalar>(text: &str) -> Result<MdpFile<T>> {
    let mut section = Section::None;
    let mut meta: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut rewards: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut transitions: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    let mut features: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[meta]" => Section::Meta,
                "[reward]" => Section::Reward,
                "[transition]" => Section::Transition,
                "[features]" => Section::Features,
                other => return Err(parse_err(ln, format!("unknown section {other}"))),
            };
            continue;
        }
        let mut toks = line.split_whitespace();
        if line.starts_with("feature") {
            toks.next();
            let s = field(toks.next(), ln, "state")?;
            let a = field(toks.next(), ln, "action")?;
            let v = toks
                .map(|t| t.parse::<f64>().map_err(|_| parse_err(ln, "bad feature value")))
                .collect::<Result<Vec<_>>>()?;
            features.push((ln, s, a, v));
            continue;
        }
        match section {
            Section::Meta => {
                let (k, v) = line.split_once('=').ok_or_else(|| parse_err(ln, "expected key = value"))?;
                meta.insert(k.trim().to_string(), (ln, v.trim().to_string()));
            }
            Section::Reward => {
                let s = field(toks.next(), ln, "state")?;
                let a = field(toks.next(), ln, "action")?;
                let r = field(toks.next(), ln, "reward")?;
                rewards.push((ln, s, a, r));
            }
            Section::Transition => {
                let s = field(toks.next(), ln, "state")?;
                let a = field(toks.next(), ln, "action")?;
                let sp = field(toks.next(), ln, "next state")?;
                let p = field(toks.next(), ln, "probability")?;
                transitions.push((ln, s, a, sp, p));
            }
            Section::Features => return Err(parse_err(ln, "expected `feature s a v1 .. vd`")),
            Section::None => return Err(parse_err(ln, "content before any section")),
        }
    }

    let get_meta = |key: &str| -> Result<&(usize, String)> {
        meta.get(key).ok_or_else(|| parse_err(0, format!("missing meta key `{key}`")))
    };
    let (l, v) = get_meta("n_states")?;
    let ns: usize = v.parse().map_err(|_| parse_err(*l, "bad n_states"))?;
    let (l, v) = get_meta("n_actions")?;
    let na: usize = v.parse().map_err(|_| parse_err(*l, "bad n_actions"))?;
    let (l, v) = get_meta("gamma")?;
    let gamma: f64 = v.parse().map_err(|_| parse_err(*l, "bad gamma"))?;
    let s0: usize = match meta.get("initial_state") {
        Some((l, v)) => v.parse().map_err(|_| parse_err(*l, "bad initial_state"))?,
        None => 0,
    };

    let in_domain = |ln: usize, s: usize, a: usize| {
        if s < ns && a < na {
            Ok(())
        } else {
            Err(parse_err(ln, format!("pair ({s}, {a}) outside {ns}x{na}")))
        }
    };
    let mut r = vec![0.0f64; ns * na];
    for (ln, s, a, val) in rewards {
        in_domain(ln, s, a)?;
        r[s * na + a] = val;
    }
    let mut p = vec![0.0f64; ns * na * ns];
    for (ln, s, a, sp, prob) in transitions {
        in_domain(ln, s, a)?;
        if sp >= ns {
            return Err(parse_err(ln, format!("next state {sp} out of range")));
        }
        p[(s * na + a) * ns + sp] = prob;
    }
    let mdp = MdpSpec::new(ns, na, p.into_iter().map(T::lit).collect(), r.into_iter().map(T::lit).collect(), T::lit(gamma), s0)?;

    let features = if features.is_empty() {
        None
    } else {
        let dim = features[0].3.len();
        let mut table: Vec<Option<Vec<T>>> = vec![None; ns * na];
        for (ln, s, a, v) in features {
            in_domain(ln, s, a)?;
            if v.len() != dim || dim == 0 {
                return Err(parse_err(ln, format!("feature dimension {} differs from {dim}", v.len())));
            }
            table[s * na + a] = Some(v.into_iter().map(T::lit).collect());
        }
        let mut out = Vec::with_capacity(ns * na);
        for (i, f) in table.into_iter().enumerate() {
            out.push(f.ok_or_else(|| parse_err(0, format!("missing feature for pair ({}, {})", i / na, i % na)))?);
        }
        Some(out)
    };
    Ok(MdpFile { mdp, features })
}

pub fn write_mdp_file<T: Scalar>(file: &MdpFile<T>) -> String {
    let mdp = &file.mdp;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = String::new();
    let _ = writeln!(out, "[meta]");
    let _ = writeln!(out, "n_states = {ns}");
    let _ = writeln!(out, "n_actions = {na}");
    let _ = writeln!(out, "gamma = {}", mdp.gamma().as_f64());
    let _ = writeln!(out, "initial_state = {}", mdp.initial_state());
    let _ = writeln!(out, "[reward]");
    for s in 0..ns {
        for a in 0..na {
            let r = mdp.reward(s, a);
            if r != T::zero() {
                let _ = writeln!(out, "{s} {a} {}", r.as_f64());
            }
        }
    }
    let _ = writeln!(out, "[transition]");
    for s in 0..ns {
        for a in 0..na {
            for (sp, p) in mdp.transition_row(s, a).iter().enumerate() {
                if *p != T::zero() {
                    let _ = writeln!(out, "{s} {a} {sp} {}", p.as_f64());
                }
            }
        }
    }
    if let Some(features) = &file.features {
        let _ = writeln!(out, "[features]");
        for (i, f) in features.iter().enumerate() {
            let vals: Vec<String> = f.iter().map(|x| x.as_f64().to_string()).collect();
            let _ = writeln!(out, "feature {} {} {}", i / na, i % na, vals.join(" "));
        }
    }
    out
}
