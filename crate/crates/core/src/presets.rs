//! Built-in problems, addressed as `name` or `name:key=value,key=value`.
//!
//! List values use `;` as separator, e.g. `harmonic:lambda=1;2,mu=0;1`.

use std::collections::BTreeMap;

use crate::error::{QmfError, Result};
use crate::hermite::LevelSelector;
use crate::linalg::Mat;
use crate::operator::{harmonic_potential, JetProblem};
use crate::scalar::{parse_rational, Rational, Scalar};
use crate::series::{MatPoly, MultiIndex, Poly};

pub const PRESET_NAMES: [&str; 6] = ["harmonic", "cubic", "quartic", "witten1d", "iso2d", "bundle2"];

/// A named problem with the level it is meant to be studied at.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub problem: JetProblem<Rational>,
    pub level: LevelSelector<Rational>,
}

struct Params {
    name: String,
    values: BTreeMap<String, String>,
}

impl Params {
    fn parse(text: &str) -> Result<Self> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut values = BTreeMap::new();
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| QmfError::Parse(format!("preset parameter '{item}' needs key=value")))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Params {
            name: name.trim().to_string(),
            values,
        })
    }

    fn take(&mut self, key: &str, default: i64) -> Result<Rational> {
        match self.values.remove(key) {
            Some(v) => parse_rational(&v),
            None => Ok(Rational::from_i64(default)),
        }
    }

    fn take_list(&mut self, key: &str) -> Result<Option<Vec<Rational>>> {
        self.values
            .remove(key)
            .map(|v| v.split(';').map(parse_rational).collect())
            .transpose()
    }

    fn finish(self) -> Result<()> {
        match self.values.keys().next() {
            Some(k) => Err(QmfError::Parse(format!("unknown parameter '{k}' for preset {}", self.name))),
            None => Ok(()),
        }
    }
}

fn q(a: i64, b: i64) -> Rational {
    Rational::from_ratio(a, b)
}

fn poly(n: usize, terms: &[(&[u32], Rational)]) -> Poly<Rational> {
    Poly::from_terms(n, terms.iter().map(|(a, c)| (MultiIndex::new(a.to_vec()), c.clone())))
}

/// Expands a preset specification.
pub fn preset(spec: &str) -> Result<Preset> {
    let mut p = Params::parse(spec)?;
    let one = Rational::from_i64(1);
    let out = match p.name.as_str() {
        "harmonic" => {
            let lambda = p.take_list("lambda")?;
            let n = match p.values.remove("n") {
                Some(v) => v.parse::<usize>().map_err(|_| QmfError::Parse(format!("invalid n '{v}'")))?,
                None => lambda.as_ref().map(|l| l.len()).unwrap_or(1),
            };
            let lambda = lambda.unwrap_or_else(|| vec![one.clone(); n]);
            if lambda.len() != n {
                return Err(QmfError::Invalid(format!("harmonic preset: {} lambda values for n = {n}", lambda.len())));
            }
            let mu = p.take_list("mu")?.unwrap_or_else(|| vec![Rational::from_i64(0)]);
            let base: Rational = lambda.iter().cloned().fold(Rational::from_i64(0), |a, b| a + b);
            let e0 = base + mu.iter().cloned().min().unwrap_or_else(|| Rational::from_i64(0));
            Preset {
                name: "harmonic".into(),
                problem: JetProblem::harmonic(lambda, mu),
                level: LevelSelector::Value(e0),
            }
        }
        "cubic" => {
            let c = p.take("c", 1)?;
            Preset {
                name: "cubic".into(),
                problem: JetProblem::new(
                    vec![one.clone()],
                    poly(1, &[(&[2], one.clone()), (&[3], c)]),
                    MatPoly::zero(1, 1),
                ),
                level: LevelSelector::Value(one.clone()),
            }
        }
        "quartic" => {
            let g = p.take("g", 1)?;
            Preset {
                name: "quartic".into(),
                problem: JetProblem::new(
                    vec![one.clone()],
                    poly(1, &[(&[2], one.clone()), (&[4], g)]),
                    MatPoly::zero(1, 1),
                ),
                level: LevelSelector::Value(one.clone()),
            }
        }
        "witten1d" => {
            // φ = x²/2 + c x³/6, V = (φ')², W = −φ''
            let c = p.take("c", 1)?;
            let v = poly(
                1,
                &[
                    (&[2], one.clone()),
                    (&[3], c.clone()),
                    (&[4], c.clone() * c.clone() * q(1, 4)),
                ],
            );
            let mut w = MatPoly::zero(1, 1);
            *w.entry_mut(0, 0) = poly(1, &[(&[0], -one.clone()), (&[1], -c)]);
            Preset {
                name: "witten1d".into(),
                problem: JetProblem::new(vec![one.clone()], v, w),
                level: LevelSelector::Value(Rational::from_i64(0)),
            }
        }
        "iso2d" => {
            let c = p.take("c", 1)?;
            let v = poly(
                2,
                &[
                    (&[2, 0], one.clone()),
                    (&[0, 2], one.clone()),
                    (&[2, 1], one.clone()),
                    (&[0, 3], c),
                ],
            );
            Preset {
                name: "iso2d".into(),
                problem: JetProblem::new(vec![one.clone(), one.clone()], v, MatPoly::zero(2, 1)),
                level: LevelSelector::Value(Rational::from_i64(4)),
            }
        }
        "bundle2" => {
            let w = p.take("w", 1)?;
            let a = p.take("a", 1)?;
            let two = Rational::from_i64(2);
            let mut v = harmonic_potential(std::slice::from_ref(&two));
            v = &v + &poly(1, &[(&[3], a)]);
            let mut endo = MatPoly::from_constant(&Mat::diag(&[Rational::from_i64(0), Rational::from_i64(4)]), 1);
            *endo.entry_mut(0, 1) = poly(1, &[(&[1], w.clone())]);
            *endo.entry_mut(1, 0) = poly(1, &[(&[1], w)]);
            Preset {
                name: "bundle2".into(),
                problem: JetProblem::new(vec![two], v, endo),
                level: LevelSelector::Value(Rational::from_i64(6)),
            }
        }
        other => {
            return Err(QmfError::Parse(format!(
                "unknown preset '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    p.finish()?;
    out.problem.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witten_potential_is_gradient_squared() {
        let p = preset("witten1d:c=2").unwrap();
        let phi_prime = poly(1, &[(&[1], q(1, 1)), (&[2], q(1, 1))]);
        assert_eq!(p.problem.potential, &phi_prime * &phi_prime);
        assert_eq!(p.problem.endomorphism.entry(0, 0), &poly(1, &[(&[0], q(-1, 1)), (&[1], q(-2, 1))]));
    }

    #[test]
    fn rejects_unknown_parameters() {
        assert!(preset("cubic:d=1").is_err());
        assert!(preset("nothing").is_err());
    }

    #[test]
    fn harmonic_lists() {
        let p = preset("harmonic:lambda=1;2,mu=0;1/2").unwrap();
        assert_eq!(p.problem.n, 2);
        assert_eq!(p.problem.rank, 2);
        assert!(matches!(p.level, LevelSelector::Value(ref e) if *e == q(3, 1)));
    }
}
