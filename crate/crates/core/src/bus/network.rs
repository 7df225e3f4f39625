use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{bernoulli, uniform};

/// Impairments of one directed wireless link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub base_latency: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub drop_prob: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            base_latency: 0.02,
            jitter: 0.005,
            drop_prob: 0.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.jitter >= 0.0 && self.base_latency >= self.jitter && self.base_latency.is_finite()) {
            return Err("base_latency >= jitter >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err("0 <= drop_prob <= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub from: String,
    pub to: String,
}

impl Link {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkModel {
    /// Applied to any inter-agent link without an explicit entry.
    pub default: Option<LinkParams>,
    pub links: BTreeMap<Link, LinkParams>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Delivered { at: f64 },
    Dropped,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("no link configured for {0}")]
    UnknownLink(String),
}

impl NetworkModel {
    pub fn params(&self, link: &Link) -> Result<LinkParams, NetworkError> {
        self.links
            .get(link)
            .copied()
            .or(self.default)
            .ok_or_else(|| NetworkError::UnknownLink(link.to_string()))
    }

    /// Samples the fate of one frame sent over `link` at `send_time`.
    /// Drop is decided first, then jitter; a dropped frame draws no jitter.
    pub fn deliver<R: Rng + ?Sized>(
        &self,
        link: &Link,
        send_time: f64,
        rng: &mut R,
    ) -> Result<Delivery, NetworkError> {
        let p = self.params(link)?;
        if bernoulli(rng, p.drop_prob) {
            return Ok(Delivery::Dropped);
        }
        let jitter = if p.jitter > 0.0 {
            uniform(rng, -p.jitter, p.jitter)
        } else {
            0.0
        };
        Ok(Delivery::Delivered {
            at: send_time + p.base_latency + jitter,
        })
    }
}
