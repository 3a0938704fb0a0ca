//! JSON run configuration: schema validation with aggregated errors.

use fibresync::maps::{
    additive_map, example1_map, schrodinger_projective, Example1Params, GPiece, HPiece, Potential,
    SchrodingerParams, SkewProduct,
};
use serde_json::{json, Map, Value};
use std::path::PathBuf;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_C: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub enum FamilySpec {
    Example1 { eps_tilde: f64, c0: f64 },
    Additive { b: u32, g: GSpec, h: HSpec },
    Schrodinger { lambda: f64, energy: f64, potential: String, b: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum GSpec {
    Zero,
    Sine { amp: f64 },
    RaisedCos { amp: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum HSpec {
    Identity,
    Sine { offset: f64, amp: f64 },
    Perturbed { amp: f64 },
    Example1 { eps_tilde: f64, c0: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum X0Spec {
    Random,
    Rational { p: u64, q: u64 },
    Decimal(String),
    InvPiMultiple(u32),
}

/// Optional per-command parameters from the config's `command` block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandParams {
    pub n: Option<u64>,
    pub k: Option<u64>,
    pub depth: Option<u32>,
    pub grid_n: Option<u64>,
    pub x_grid_n: Option<u64>,
    pub y_grid_n: Option<u64>,
    pub region_grid_n: Option<u64>,
    pub samples: Option<u64>,
    pub budget: Option<u64>,
    pub c: Option<f64>,
    pub eps_prime: Option<f64>,
    pub y_fatten_tol: Option<f64>,
    pub g_arcs: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub family: FamilySpec,
    pub seed: u64,
    pub precision_bits: Option<u64>,
    pub output_dir: PathBuf,
    pub x0: X0Spec,
    pub y0: f64,
    pub command: CommandParams,
}

struct Validator {
    errors: Vec<String>,
}

impl Validator {
    fn err(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn f64_field(&mut self, map: &Map<String, Value>, key: &str, ctx: &str) -> Option<f64> {
        match map.get(key) {
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.err(format!("{ctx}{key} must be a finite number"));
                    None
                }
            },
            None => {
                self.err(format!("{ctx}missing required key \"{key}\""));
                None
            }
        }
    }

    fn u64_field(&mut self, map: &Map<String, Value>, key: &str, ctx: &str) -> Option<u64> {
        match map.get(key) {
            Some(v) => match v.as_u64() {
                Some(x) => Some(x),
                None => {
                    self.err(format!("{ctx}{key} must be a non-negative integer"));
                    None
                }
            },
            None => {
                self.err(format!("{ctx}missing required key \"{key}\""));
                None
            }
        }
    }

    fn check_keys(&mut self, map: &Map<String, Value>, allowed: &[&str], ctx: &str) {
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(format!("{ctx}unknown key \"{key}\""));
            }
        }
    }
}

/// Validate a parsed JSON document into a typed run configuration. All
/// violations are collected and reported together.
pub fn validate_config(doc: &Value) -> Result<RunConfig, Vec<String>> {
    let map = match doc.as_object() {
        Some(m) => m,
        None => return Err(vec!["config must be a JSON object".into()]),
    };
    let mut v = Validator { errors: Vec::new() };

    let family_name = match map.get("family").and_then(Value::as_str) {
        Some(f) => f.to_string(),
        None => {
            v.err("missing required key \"family\" (example1 | additive | schrodinger)");
            String::new()
        }
    };

    let mut allowed: Vec<&str> = vec![
        "family",
        "seed",
        "precision_bits",
        "output_dir",
        "x0",
        "y0",
        "command",
    ];
    let family = match family_name.as_str() {
        "example1" => {
            allowed.extend(["eps_tilde", "c0"]);
            let eps_tilde = v.f64_field(map, "eps_tilde", "").unwrap_or(f64::NAN);
            let c0 = match map.get("c0") {
                Some(_) => v.f64_field(map, "c0", "").unwrap_or(f64::NAN),
                None => 0.15,
            };
            if !(eps_tilde > 0.0 && eps_tilde < 0.125) {
                v.err(format!("eps_tilde out of (0, 1/8): {eps_tilde}"));
            }
            if !(c0 > 0.0 && c0 <= 0.18) {
                v.err(format!("c0 out of (0, 0.18]: {c0}"));
            }
            Some(FamilySpec::Example1 { eps_tilde, c0 })
        }
        "additive" => {
            allowed.extend(["b", "g", "h"]);
            let b = v.u64_field(map, "b", "").unwrap_or(0);
            if b < 2 {
                v.err(format!("b must be an integer >= 2, got {b}"));
            }
            let g = parse_g(&mut v, map.get("g"));
            let h = parse_h(&mut v, map.get("h"));
            match (g, h) {
                (Some(g), Some(h)) => Some(FamilySpec::Additive { b: b as u32, g, h }),
                _ => None,
            }
        }
        "schrodinger" => {
            allowed.extend(["lambda", "energy", "b", "potential"]);
            let lambda = v.f64_field(map, "lambda", "").unwrap_or(f64::NAN);
            let energy = v.f64_field(map, "energy", "").unwrap_or(f64::NAN);
            let b = v.u64_field(map, "b", "").unwrap_or(0);
            if !(lambda > 0.0) {
                v.err(format!("lambda must be > 0, got {lambda}"));
            }
            if b < 2 {
                v.err(format!("b must be an integer >= 2, got {b}"));
            }
            let potential = match map.get("potential") {
                None => "cos".to_string(),
                Some(Value::String(s)) if s == "cos" || s == "one" => s.clone(),
                Some(other) => {
                    v.err(format!("potential must be \"cos\" or \"one\", got {other}"));
                    "cos".to_string()
                }
            };
            Some(FamilySpec::Schrodinger { lambda, energy, potential, b: b as u32 })
        }
        "" => None,
        other => {
            v.err(format!("unknown family \"{other}\""));
            None
        }
    };
    v.check_keys(map, &allowed, "");

    let seed = match map.get("seed") {
        None => DEFAULT_SEED,
        Some(_) => v.u64_field(map, "seed", "").unwrap_or(DEFAULT_SEED),
    };
    let precision_bits = match map.get("precision_bits") {
        None => None,
        Some(_) => v.u64_field(map, "precision_bits", ""),
    };
    let output_dir = match map.get("output_dir") {
        None => PathBuf::from("out"),
        Some(Value::String(s)) => PathBuf::from(s),
        Some(other) => {
            v.err(format!("output_dir must be a string, got {other}"));
            PathBuf::from("out")
        }
    };
    let x0 = parse_x0(&mut v, map.get("x0"));
    let y0 = match map.get("y0") {
        None => 0.25,
        Some(_) => {
            let y = v.f64_field(map, "y0", "").unwrap_or(0.25);
            if !(0.0..1.0).contains(&y) {
                v.err(format!("y0 must lie in [0,1), got {y}"));
            }
            y
        }
    };
    let command = parse_command(&mut v, map.get("command"));

    match (family, v.errors.is_empty()) {
        (Some(family), true) => Ok(RunConfig {
            family,
            seed,
            precision_bits,
            output_dir,
            x0,
            y0,
            command,
        }),
        _ => Err(v.errors),
    }
}

fn parse_g(v: &mut Validator, val: Option<&Value>) -> Option<GSpec> {
    let map = match val.and_then(Value::as_object) {
        Some(m) => m,
        None => {
            v.err("g must be an object with a \"kind\" key");
            return None;
        }
    };
    match map.get("kind").and_then(Value::as_str) {
        Some("zero") => {
            v.check_keys(map, &["kind"], "g: ");
            Some(GSpec::Zero)
        }
        Some("sine") => {
            v.check_keys(map, &["kind", "amp"], "g: ");
            let amp = v.f64_field(map, "amp", "g: ")?;
            Some(GSpec::Sine { amp })
        }
        Some("raised_cos") => {
            v.check_keys(map, &["kind", "amp"], "g: ");
            let amp = v.f64_field(map, "amp", "g: ")?;
            Some(GSpec::RaisedCos { amp })
        }
        _ => {
            v.err("g.kind must be one of zero | sine | raised_cos");
            None
        }
    }
}

fn parse_h(v: &mut Validator, val: Option<&Value>) -> Option<HSpec> {
    let map = match val.and_then(Value::as_object) {
        Some(m) => m,
        None => {
            v.err("h must be an object with a \"kind\" key");
            return None;
        }
    };
    match map.get("kind").and_then(Value::as_str) {
        Some("identity") => {
            v.check_keys(map, &["kind"], "h: ");
            Some(HSpec::Identity)
        }
        Some("sine") => {
            v.check_keys(map, &["kind", "offset", "amp"], "h: ");
            let offset = v.f64_field(map, "offset", "h: ")?;
            let amp = v.f64_field(map, "amp", "h: ")?;
            Some(HSpec::Sine { offset, amp })
        }
        Some("perturbed") => {
            v.check_keys(map, &["kind", "amp"], "h: ");
            let amp = v.f64_field(map, "amp", "h: ")?;
            if 2.0 * std::f64::consts::PI * amp.abs() >= 1.0 {
                v.err(format!("h: perturbed amp too large for a diffeomorphism: {amp}"));
            }
            Some(HSpec::Perturbed { amp })
        }
        Some("example1") => {
            v.check_keys(map, &["kind", "eps_tilde", "c0"], "h: ");
            let eps_tilde = v.f64_field(map, "eps_tilde", "h: ")?;
            let c0 = match map.get("c0") {
                Some(_) => v.f64_field(map, "c0", "h: ")?,
                None => 0.15,
            };
            if !(eps_tilde > 0.0 && eps_tilde < 0.125) {
                v.err(format!("h: eps_tilde out of (0, 1/8): {eps_tilde}"));
            }
            if !(c0 > 0.0 && c0 <= 0.18) {
                v.err(format!("h: c0 out of (0, 0.18]: {c0}"));
            }
            Some(HSpec::Example1 { eps_tilde, c0 })
        }
        _ => {
            v.err("h.kind must be one of identity | sine | perturbed | example1");
            None
        }
    }
}

fn parse_x0(v: &mut Validator, val: Option<&Value>) -> X0Spec {
    match val {
        None => X0Spec::Random,
        Some(Value::String(s)) if s == "random" => X0Spec::Random,
        Some(Value::Object(map)) => {
            if let Some(arr) = map.get("rational").and_then(Value::as_array) {
                v.check_keys(map, &["rational"], "x0: ");
                let p = arr.first().and_then(Value::as_u64);
                let q = arr.get(1).and_then(Value::as_u64);
                match (p, q, arr.len()) {
                    (Some(p), Some(q), 2) if q > 0 && p < q => return X0Spec::Rational { p, q },
                    _ => v.err("x0.rational must be [p, q] with 0 <= p < q"),
                }
                X0Spec::Random
            } else if let Some(s) = map.get("decimal").and_then(Value::as_str) {
                v.check_keys(map, &["decimal"], "x0: ");
                X0Spec::Decimal(s.to_string())
            } else if let Some(k) = map.get("inv_pi_multiple").and_then(Value::as_u64) {
                v.check_keys(map, &["inv_pi_multiple"], "x0: ");
                if k == 0 || k > u32::MAX as u64 {
                    v.err("x0.inv_pi_multiple must be a positive 32-bit integer");
                    X0Spec::Random
                } else {
                    X0Spec::InvPiMultiple(k as u32)
                }
            } else {
                v.err("x0 must be \"random\" or one of {rational, decimal, inv_pi_multiple}");
                X0Spec::Random
            }
        }
        Some(other) => {
            v.err(format!("invalid x0: {other}"));
            X0Spec::Random
        }
    }
}

fn parse_command(v: &mut Validator, val: Option<&Value>) -> CommandParams {
    let mut out = CommandParams::default();
    let map = match val {
        None => return out,
        Some(Value::Object(m)) => m,
        Some(other) => {
            v.err(format!("command must be an object, got {other}"));
            return out;
        }
    };
    v.check_keys(
        map,
        &[
            "n", "k", "depth", "grid_n", "x_grid_n", "y_grid_n", "region_grid_n", "samples",
            "budget", "c", "eps_prime", "y_fatten_tol", "g_arcs",
        ],
        "command: ",
    );
    let u = |v: &mut Validator, key: &str, min: u64| -> Option<u64> {
        map.get(key)?;
        let x = v.u64_field(map, key, "command: ")?;
        if x < min {
            v.err(format!("command: {key} must be >= {min}, got {x}"));
            return None;
        }
        Some(x)
    };
    out.n = u(v, "n", 1);
    out.k = u(v, "k", 1);
    out.depth = u(v, "depth", 1).map(|d| d as u32);
    out.grid_n = u(v, "grid_n", 16);
    out.x_grid_n = u(v, "x_grid_n", 16);
    out.y_grid_n = u(v, "y_grid_n", 16);
    out.region_grid_n = u(v, "region_grid_n", 16);
    out.samples = u(v, "samples", 1);
    out.budget = u(v, "budget", 1);
    for (key, slot) in [("c", &mut out.c), ("eps_prime", &mut out.eps_prime)] {
        if map.get(key).is_some() {
            let x = v.f64_field(map, key, "command: ").unwrap_or(f64::NAN);
            if !(x > 0.0 && x < 1.0) {
                v.err(format!("command: {key} must lie in (0,1), got {x}"));
            } else {
                *slot = Some(x);
            }
        }
    }
    if map.get("y_fatten_tol").is_some() {
        let x = v.f64_field(map, "y_fatten_tol", "command: ").unwrap_or(f64::NAN);
        if !(x > 0.0) {
            v.err(format!("command: y_fatten_tol must be > 0, got {x}"));
        } else {
            out.y_fatten_tol = Some(x);
        }
    }
    if let Some(arr) = map.get("g_arcs") {
        match arr.as_array() {
            Some(arcs) => {
                let mut parsed = Vec::new();
                for a in arcs {
                    let pair = a.as_array().and_then(|p| {
                        let s = p.first()?.as_f64()?;
                        let l = p.get(1)?.as_f64()?;
                        (p.len() == 2 && l > 0.0 && l <= 1.0).then_some((s, l))
                    });
                    match pair {
                        Some(p) => parsed.push(p),
                        None => v.err("command: g_arcs entries must be [start, length] with length in (0,1]"),
                    }
                }
                out.g_arcs = Some(parsed);
            }
            None => v.err("command: g_arcs must be an array of [start, length] pairs"),
        }
    }
    out
}

impl RunConfig {
    /// Canonical JSON form with every default materialized.
    pub fn emit(&self) -> Value {
        let mut doc = match &self.family {
            FamilySpec::Example1 { eps_tilde, c0 } => {
                json!({"family": "example1", "eps_tilde": eps_tilde, "c0": c0})
            }
            FamilySpec::Additive { b, g, h } => {
                let g = match g {
                    GSpec::Zero => json!({"kind": "zero"}),
                    GSpec::Sine { amp } => json!({"kind": "sine", "amp": amp}),
                    GSpec::RaisedCos { amp } => json!({"kind": "raised_cos", "amp": amp}),
                };
                let h = match h {
                    HSpec::Identity => json!({"kind": "identity"}),
                    HSpec::Sine { offset, amp } => json!({"kind": "sine", "offset": offset, "amp": amp}),
                    HSpec::Perturbed { amp } => json!({"kind": "perturbed", "amp": amp}),
                    HSpec::Example1 { eps_tilde, c0 } => {
                        json!({"kind": "example1", "eps_tilde": eps_tilde, "c0": c0})
                    }
                };
                json!({"family": "additive", "b": b, "g": g, "h": h})
            }
            FamilySpec::Schrodinger { lambda, energy, potential, b } => {
                json!({"family": "schrodinger", "lambda": lambda, "energy": energy, "potential": potential, "b": b})
            }
        };
        let obj = doc.as_object_mut().unwrap();
        obj.insert("seed".into(), json!(self.seed));
        if let Some(p) = self.precision_bits {
            obj.insert("precision_bits".into(), json!(p));
        }
        obj.insert("output_dir".into(), json!(self.output_dir.to_string_lossy()));
        obj.insert(
            "x0".into(),
            match &self.x0 {
                X0Spec::Random => json!("random"),
                X0Spec::Rational { p, q } => json!({"rational": [p, q]}),
                X0Spec::Decimal(s) => json!({"decimal": s}),
                X0Spec::InvPiMultiple(k) => json!({"inv_pi_multiple": k}),
            },
        );
        obj.insert("y0".into(), json!(self.y0));
        let mut cmd = Map::new();
        let c = &self.command;
        for (key, val) in [
            ("n", c.n),
            ("k", c.k),
            ("depth", c.depth.map(u64::from)),
            ("grid_n", c.grid_n),
            ("x_grid_n", c.x_grid_n),
            ("y_grid_n", c.y_grid_n),
            ("region_grid_n", c.region_grid_n),
            ("samples", c.samples),
            ("budget", c.budget),
        ] {
            if let Some(x) = val {
                cmd.insert(key.into(), json!(x));
            }
        }
        for (key, val) in [("c", c.c), ("eps_prime", c.eps_prime), ("y_fatten_tol", c.y_fatten_tol)] {
            if let Some(x) = val {
                cmd.insert(key.into(), json!(x));
            }
        }
        if let Some(arcs) = &c.g_arcs {
            cmd.insert("g_arcs".into(), json!(arcs.iter().map(|&(s, l)| vec![s, l]).collect::<Vec<_>>()));
        }
        if !cmd.is_empty() {
            obj.insert("command".into(), Value::Object(cmd));
        }
        doc
    }

    pub fn build_map(&self) -> Result<SkewProduct, String> {
        match &self.family {
            FamilySpec::Example1 { eps_tilde, c0 } => {
                let p = Example1Params::new(*eps_tilde, *c0).map_err(|e| e.to_string())?;
                Ok(example1_map(p))
            }
            FamilySpec::Additive { b, g, h } => {
                let g = match g {
                    GSpec::Zero => GPiece::Zero,
                    GSpec::Sine { amp } => GPiece::Sine { amp: *amp },
                    GSpec::RaisedCos { amp } => GPiece::RaisedCos { amp: *amp },
                };
                let h = match h {
                    HSpec::Identity => HPiece::Identity,
                    HSpec::Sine { offset, amp } => HPiece::Sine { offset: *offset, amp: *amp },
                    HSpec::Perturbed { amp } => HPiece::Perturbed { amp: *amp },
                    HSpec::Example1 { eps_tilde, c0 } => {
                        HPiece::Example1(Example1Params::new(*eps_tilde, *c0).map_err(|e| e.to_string())?)
                    }
                };
                additive_map(*b, g, h).map_err(|e| e.to_string())
            }
            FamilySpec::Schrodinger { lambda, energy, potential, b } => {
                let pot = if potential == "one" { Potential::One } else { Potential::Cos };
                let p = SchrodingerParams::new(*lambda, *energy, pot, *b).map_err(|e| e.to_string())?;
                schrodinger_projective(p).map_err(|e| e.to_string())
            }
        }
    }

    pub fn schrodinger_params(&self) -> Option<SchrodingerParams> {
        match &self.family {
            FamilySpec::Schrodinger { lambda, energy, potential, b } => {
                let pot = if potential == "one" { Potential::One } else { Potential::Cos };
                SchrodingerParams::new(*lambda, *energy, pot, *b).ok()
            }
            _ => None,
        }
    }

    pub fn b(&self) -> u32 {
        match &self.family {
            FamilySpec::Example1 { .. } => 7,
            FamilySpec::Additive { b, .. } => *b,
            FamilySpec::Schrodinger { b, .. } => *b,
        }
    }
}
