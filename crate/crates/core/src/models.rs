//! Built-in model generators and the JSON model file format.
//!
//! Model spec strings: `two_state`, `cycle(n)`, `path(n)`, `path_killed(n)`,
//! `torus(n,d)`, `stable_like(n,d,phi,c_lower,c_upper,seed)`, or the path
//! of a `.json` model file
//! `{"states": n, "m": [...], "edges": [[x,y,c], ...], "coords": [[...], ...]}`
//! (optional keys: `period`, `killing`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::FiniteDirichletForm;
use crate::profiles::ScalingFunction;

/// Two states, unit weights, one unit edge.
pub fn two_state() -> FiniteDirichletForm {
    FiniteDirichletForm::from_edges(vec![1.0, 1.0], &[(0, 1, 1.0)])
        .and_then(|f| f.with_coords(vec![vec![0.0], vec![1.0]]))
        .expect("valid two-state model")
}

/// Nearest-neighbour path `0 - 1 - … - (n-1)` with unit weights.
pub fn path(n: usize) -> Result<FiniteDirichletForm> {
    if n < 2 {
        return Err(Error::InvalidArgument("path needs n ≥ 2".into()));
    }
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    FiniteDirichletForm::from_edges(vec![1.0; n], &edges)?.with_coords((0..n).map(|i| vec![i as f64]).collect())
}

/// Path whose two end states are joined by a unit edge to a cemetery: the
/// part form of `path(n + 2)` on its interior.
pub fn path_killed(n: usize) -> Result<FiniteDirichletForm> {
    let mut kill = vec![0.0; n];
    if n == 1 {
        kill[0] = 2.0;
        return FiniteDirichletForm::new(vec![1.0], nalgebra::DMatrix::zeros(1, 1))?
            .with_killing(kill)?
            .with_coords(vec![vec![0.0]]);
    }
    kill[0] = 1.0;
    kill[n - 1] = 1.0;
    path(n)?.with_killing(kill)
}

/// Periodic lattice `(ℤ/nℤ)^d` with unit nearest-neighbour edges.
pub fn torus(n: usize, d: usize) -> Result<FiniteDirichletForm> {
    if n < 3 || d == 0 {
        return Err(Error::InvalidArgument("torus needs n ≥ 3 and d ≥ 1".into()));
    }
    let total = n.checked_pow(d as u32).filter(|&t| t <= 4096).ok_or_else(|| {
        Error::InvalidArgument(format!("torus({n},{d}) exceeds 4096 states"))
    })?;
    let coords: Vec<Vec<f64>> = (0..total).map(|i| lattice_point(i, n, d)).collect();
    let mut edges = Vec::with_capacity(total * d);
    for i in 0..total {
        let mut stride = 1;
        for _ in 0..d {
            let digit = (i / stride) % n;
            let j = i - digit * stride + ((digit + 1) % n) * stride;
            edges.push((i, j, 1.0));
            stride *= n;
        }
    }
    FiniteDirichletForm::from_edges(vec![1.0; total], &edges)?
        .with_coords(coords)?
        .with_period(vec![n as f64; d])
}

/// `torus(n, 1)`.
pub fn cycle(n: usize) -> Result<FiniteDirichletForm> {
    torus(n, 1)
}

fn lattice_point(mut i: usize, n: usize, d: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(d);
    for _ in 0..d {
        p.push((i % n) as f64);
        i /= n;
    }
    p
}

/// Long-range chain on the periodic lattice `(ℤ/nℤ)^d` (`n^d` states, unit
/// weights) with `J(x,y) = κ(x,y) / (|x-y|^d φ(|x-y|))`, where the
/// symmetric coefficients `κ` are drawn uniformly from `[c_lower, c_upper]`.
pub fn stable_like(
    n: usize,
    d: usize,
    phi: &ScalingFunction,
    c_lower: f64,
    c_upper: f64,
    seed: u64,
) -> Result<FiniteDirichletForm> {
    if !(c_lower > 0.0 && c_upper >= c_lower) {
        return Err(Error::InvalidArgument(format!("need 0 < c_lower ≤ c_upper, got {c_lower}, {c_upper}")));
    }
    if n < 3 || d == 0 {
        return Err(Error::InvalidArgument("stable_like needs n ≥ 3 and d ≥ 1".into()));
    }
    let total = n.checked_pow(d as u32).filter(|&t| t <= 4096).ok_or_else(|| {
        Error::InvalidArgument(format!("stable_like({n},{d}) exceeds 4096 states"))
    })?;
    let coords: Vec<Vec<f64>> = (0..total).map(|i| lattice_point(i, n, d)).collect();
    let shell = FiniteDirichletForm::new(vec![1.0; total], nalgebra::DMatrix::zeros(total, total))?
        .with_coords(coords.clone())?
        .with_period(vec![n as f64; d])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(total * (total - 1) / 2);
    for x in 0..total {
        for y in (x + 1)..total {
            let r = shell.distance(x, y)?;
            let kappa = if c_upper > c_lower { rng.random_range(c_lower..=c_upper) } else { c_lower };
            edges.push((x, y, kappa / (r.powi(d as i32) * phi.eval(r))));
        }
    }
    FiniteDirichletForm::from_edges(vec![1.0; total], &edges)?
        .with_coords(coords)?
        .with_period(vec![n as f64; d])
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub states: usize,
    pub m: Vec<f64>,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killing: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn into_form(self) -> Result<FiniteDirichletForm> {
        if self.m.len() != self.states {
            return Err(Error::LengthMismatch { expected: self.states, got: self.m.len() });
        }
        let mut f = FiniteDirichletForm::from_edges(self.m, &self.edges)?;
        if let Some(c) = self.coords {
            f = f.with_coords(c)?;
        }
        if let Some(p) = self.period {
            f = f.with_period(p)?;
        }
        if let Some(k) = self.killing {
            f = f.with_killing(k)?;
        }
        Ok(f)
    }

    pub fn from_form(form: &FiniteDirichletForm) -> Self {
        let n = form.n();
        let c = form.conductances();
        let mut edges = Vec::new();
        for x in 0..n {
            for y in (x + 1)..n {
                if c[(x, y)] > 0.0 {
                    edges.push((x, y, c[(x, y)]));
                }
            }
        }
        ModelFile {
            states: n,
            m: form.m().to_vec(),
            edges,
            coords: form.coords().map(|c| c.to_vec()),
            period: form.period().map(|p| p.to_vec()),
            killing: form.has_killing().then(|| form.killing().to_vec()),
        }
    }
}

/// Loads a JSON model file.
pub fn load_model_file(path: &str) -> Result<FiniteDirichletForm> {
    let text = std::fs::read_to_string(path)?;
    let mf: ModelFile = serde_json::from_str(&text)?;
    mf.into_form()
}

/// Splits `a,b(c,d),e` at top-level commas.
fn split_args(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

/// Parses a model spec string (see the module docs).
pub fn parse_model(spec: &str) -> Result<FiniteDirichletForm> {
    let s = spec.trim();
    if s.ends_with(".json") {
        return load_model_file(s);
    }
    if s == "two_state" || s == "two_state()" {
        return Ok(two_state());
    }
    let open = s.find('(').ok_or_else(|| Error::Parse { pos: s.len(), msg: format!("unknown model `{s}`") })?;
    if !s.ends_with(')') {
        return Err(Error::Parse { pos: s.len(), msg: "model spec must end with `)`".into() });
    }
    let name = &s[..open];
    let args = split_args(&s[open + 1..s.len() - 1]);
    let int = |k: usize| -> Result<usize> {
        args.get(k)
            .and_then(|a| a.parse::<usize>().ok())
            .ok_or_else(|| Error::Parse { pos: open + 1, msg: format!("argument {} of {name} must be a nonnegative integer", k + 1) })
    };
    let num = |k: usize| -> Result<f64> {
        args.get(k)
            .and_then(|a| a.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse { pos: open + 1, msg: format!("argument {} of {name} must be a number", k + 1) })
    };
    let arity = |want: usize| -> Result<()> {
        if args.len() != want {
            return Err(Error::Parse { pos: open + 1, msg: format!("{name} takes {want} arguments, got {}", args.len()) });
        }
        Ok(())
    };
    match name {
        "cycle" => {
            arity(1)?;
            cycle(int(0)?)
        }
        "path" => {
            arity(1)?;
            path(int(0)?)
        }
        "path_killed" => {
            arity(1)?;
            path_killed(int(0)?)
        }
        "torus" => {
            arity(2)?;
            torus(int(0)?, int(1)?)
        }
        "stable_like" => {
            arity(6)?;
            let phi = ScalingFunction::parse(args[2])?;
            stable_like(int(0)?, int(1)?, &phi, num(3)?, num(4)?, int(5)? as u64)
        }
        other => Err(Error::Parse { pos: 0, msg: format!("unknown model `{other}`") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_degrees_and_distances() {
        let t = torus(4, 2).unwrap();
        assert_eq!(t.n(), 16);
        for x in 0..16 {
            assert_eq!(t.degree(x), 4.0);
        }
        assert_eq!(t.distance(0, 3).unwrap(), 1.0);
        let c = cycle(64).unwrap();
        assert_eq!(c.distance(0, 32).unwrap(), 32.0);
        assert_eq!(c.distance(0, 63).unwrap(), 1.0);
    }

    #[test]
    fn killed_path_is_interior_part_form() {
        let a = path_killed(5).unwrap();
        let b = path(7).unwrap().part_form(&[1, 2, 3, 4, 5]).unwrap().form;
        assert_eq!(a.generator(), b.generator());
    }

    #[test]
    fn stable_like_is_seeded() {
        let phi = ScalingFunction::parse("pow(1)").unwrap();
        let a = stable_like(16, 1, &phi, 0.5, 2.0, 3).unwrap();
        let b = stable_like(16, 1, &phi, 0.5, 2.0, 3).unwrap();
        let c = stable_like(16, 1, &phi, 0.5, 2.0, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // κ = 1: J(x,y) = 1/|x-y|²
        let r = stable_like(16, 1, &phi, 1.0, 1.0, 0).unwrap();
        assert!((r.conductances()[(0, 3)] - 1.0 / 9.0).abs() < 1e-15);
        assert!((r.conductances()[(0, 15)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spec_strings() {
        assert_eq!(parse_model("cycle(8)").unwrap().n(), 8);
        assert_eq!(parse_model("torus(3,2)").unwrap().n(), 9);
        assert_eq!(parse_model("stable_like(8,1,pow(0.5),1,2,1)").unwrap().n(), 8);
        assert!(parse_model("cycle(x)").is_err());
        assert!(parse_model("blob(3)").is_err());
        assert!(parse_model("torus(3)").is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let f = path_killed(4).unwrap();
        let mf = ModelFile::from_form(&f);
        let json = serde_json::to_string(&mf).unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_form().unwrap(), f);
    }
}
