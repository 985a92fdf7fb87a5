//! Uniform entry point over every attribution method.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{integrated_gradients, smoothgrad, BaselineConfig};
use crate::dmbp::{dmbp_attribution, DmbpConfig};
use crate::error::{Error, Result};
use crate::imaging::AttributionMap;
use crate::linearize::vanilla_attribution;
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dmbp,
    /// Gradient times input.
    Grad,
    Ig,
    Sg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dmbp, Method::Grad, Method::Ig, Method::Sg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dmbp => "dmbp",
            Method::Grad => "grad",
            Method::Ig => "ig",
            Method::Sg => "sg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::arg(format!(
                    "unknown method {s:?} (expected dmbp, grad, ig or sg)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MethodConfig {
    pub dmbp: DmbpConfig,
    pub baselines: BaselineConfig,
}

pub fn attribute<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target: usize,
    method: Method,
    cfg: &MethodConfig,
) -> Result<AttributionMap> {
    match method {
        Method::Dmbp => Ok(dmbp_attribution(net, x, target, &cfg.dmbp)?.0),
        Method::Grad => vanilla_attribution(net, x, target),
        Method::Ig => integrated_gradients(net, x, target, &cfg.baselines),
        Method::Sg => smoothgrad(net, x, target, &cfg.baselines),
    }
}
