//! Named benchmark target functions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Piecewise multi-tone signal on `[-pi, pi]`: `10(sin x + sin 3x)` on the
/// left half, `10(sin 23x + sin 137x + sin 203x)` on the right half.
pub fn target1(x: f64) -> f64 {
    if x <= 0.0 {
        10.0 * (x.sin() + (3.0 * x).sin())
    } else {
        10.0 * ((23.0 * x).sin() + (137.0 * x).sin() + (203.0 * x).sin())
    }
}

/// Unit square wave with the phase of `sin(k x)`.
pub fn square(k: f64, x: f64) -> f64 {
    let s = (k * x).sin();
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// [`target1`] with every sine replaced by a square wave of the same frequency.
pub fn target1_square(x: f64) -> f64 {
    if x <= 0.0 {
        10.0 * (square(1.0, x) + square(3.0, x))
    } else {
        10.0 * (square(23.0, x) + square(137.0, x) + square(203.0, x))
    }
}

/// [`target1`] without the top tone and without the factor 10.
pub fn g(x: f64) -> f64 {
    if x <= 0.0 {
        x.sin() + (3.0 * x).sin()
    } else {
        (23.0 * x).sin() + (137.0 * x).sin()
    }
}

/// Lower-frequency variant of [`g`].
pub fn g_tilde(x: f64) -> f64 {
    if x <= 0.0 {
        x.sin() + (3.0 * x).sin()
    } else {
        (23.0 * x).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "id")]
pub enum Target {
    Target1,
    Target1Square,
    /// `g(x) g(y)` on `[-pi, pi]^2`.
    #[serde(rename = "separable-2d")]
    Separable2d,
    /// `sin(g~(x) g~(y))` on `[-pi, pi]^2`.
    #[serde(rename = "composite-2d")]
    Composite2d,
    /// `cos(k x)`.
    Cosine {
        k: f64,
    },
    Constant {
        value: f64,
    },
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Separable2d | Target::Composite2d => 2,
            _ => 1,
        }
    }

    /// Default domain, one interval per dimension.
    pub fn domain(&self) -> Vec<(f64, f64)> {
        vec![(-PI, PI); self.dim()]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Target::Target1 => target1(x[0]),
            Target::Target1Square => target1_square(x[0]),
            Target::Separable2d => g(x[0]) * g(x[1]),
            Target::Composite2d => (g_tilde(x[0]) * g_tilde(x[1])).sin(),
            Target::Cosine { k } => (k * x[0]).cos(),
            Target::Constant { value } => value,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Target1 => "target1",
            Target::Target1Square => "target1-square",
            Target::Separable2d => "separable-2d",
            Target::Composite2d => "composite-2d",
            Target::Cosine { .. } => "cosine",
            Target::Constant { .. } => "constant",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces() {
        let x = -0.4f64;
        assert_eq!(target1(x), 10.0 * (x.sin() + (3.0 * x).sin()));
        let x = 0.4f64;
        assert_eq!(
            target1(x),
            10.0 * ((23.0 * x).sin() + (137.0 * x).sin() + (203.0 * x).sin())
        );
        assert_eq!(target1_square(-0.1), -20.0);
        assert_eq!(Target::Separable2d.eval(&[0.4, -0.4]), g(0.4) * g(-0.4));
        assert_eq!(g(0.4), target1(0.4) / 10.0 - (203.0f64 * 0.4).sin());
    }
}
