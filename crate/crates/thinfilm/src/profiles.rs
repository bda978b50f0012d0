//! Analytic scalar and vector fields on the parameter square used as
//! boundary data, tractions and initial states.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::{Field2D, Grid2D};

/// Tangential field given by its components in `(a1, a2)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorSpec {
    Uniform {
        value: [f64; 2],
    },
    /// `(0, mean + amplitude cos(pi k xi1))`; zero normal derivative on every edge.
    Shear {
        amplitude: f64,
        wavenumber: f64,
        #[serde(default)]
        mean: f64,
    },
    /// `(d psi / d xi2, -d psi / d xi1)` with `psi = amplitude sin(pi k1 xi1) sin(pi k2 xi2)`.
    Stream {
        amplitude: f64,
        wavenumber: [f64; 2],
    },
}

impl Default for VectorSpec {
    fn default() -> Self {
        VectorSpec::Uniform { value: [0.0; 2] }
    }
}

impl VectorSpec {
    pub fn eval(&self, xi: [f64; 2]) -> [f64; 2] {
        match *self {
            VectorSpec::Uniform { value } => value,
            VectorSpec::Shear { amplitude, wavenumber, mean } => {
                [0.0, mean + amplitude * (PI * wavenumber * xi[0]).cos()]
            }
            VectorSpec::Stream { amplitude, wavenumber: [k1, k2] } => {
                let (s1, c1) = (PI * k1 * xi[0]).sin_cos();
                let (s2, c2) = (PI * k2 * xi[1]).sin_cos();
                [amplitude * PI * k2 * s1 * c2, -amplitude * PI * k1 * c1 * s2]
            }
        }
    }

    pub fn fields(&self, g: &Grid2D) -> [Field2D; 2] {
        [Field2D::from_fn(g, |x| self.eval(x)[0]), Field2D::from_fn(g, |x| self.eval(x)[1])]
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = match self {
            VectorSpec::Uniform { value } => value.iter().all(|v| v.is_finite()),
            VectorSpec::Shear { amplitude, wavenumber, mean } => {
                amplitude.is_finite() && wavenumber.is_finite() && mean.is_finite()
            }
            VectorSpec::Stream { amplitude, wavenumber } => {
                amplitude.is_finite() && wavenumber.iter().all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err("velocity field parameters must be finite".into())
        }
    }
}

/// Scalar field, affine in the parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSpec {
    Constant { value: f64 },
    Linear { value: f64, gradient: [f64; 2] },
}

impl Default for ScalarSpec {
    fn default() -> Self {
        ScalarSpec::Constant { value: 0.0 }
    }
}

impl ScalarSpec {
    pub fn eval(&self, xi: [f64; 2]) -> f64 {
        match *self {
            ScalarSpec::Constant { value } => value,
            ScalarSpec::Linear { value, gradient } => value + gradient[0] * xi[0] + gradient[1] * xi[1],
        }
    }

    pub fn field(&self, g: &Grid2D) -> Field2D {
        Field2D::from_fn(g, |x| self.eval(x))
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match self {
            ScalarSpec::Constant { value } => value.is_finite(),
            ScalarSpec::Linear { value, gradient } => value.is_finite() && gradient.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err("scalar field parameters must be finite".into())
        }
    }
}
