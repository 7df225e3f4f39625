//! Framed pub/sub transport: wire encoding, canonical payloads, topic
//! subscriptions and the seeded link-impairment model.

pub mod canonical;
pub mod network;
pub mod wire;

pub use canonical::{to_canonical_bytes, to_canonical_string};
pub use network::{Delivery, Link, LinkParams, NetworkError, NetworkModel};
pub use wire::{decode, encode, seconds_to_ns, BusFrame, FrameStream, MsgType, WireError};

/// A subscription either names one topic exactly or every topic under a
/// prefix (ZMQ SUB style).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subscription {
    Exact(String),
    Prefix(String),
}

impl Subscription {
    pub fn matches(&self, topic: &str) -> bool {
        match self {
            Subscription::Exact(t) => t == topic,
            Subscription::Prefix(p) => topic.starts_with(p.as_str()),
        }
    }
}

/// Subscription table keyed by subscriber index.
#[derive(Debug, Clone, Default)]
pub struct Router {
    subs: Vec<(usize, Subscription)>,
}

impl Router {
    pub fn subscribe(&mut self, subscriber: usize, sub: Subscription) {
        if !self.subs.iter().any(|(s, x)| *s == subscriber && *x == sub) {
            self.subs.push((subscriber, sub));
        }
    }

    /// Subscribers of `topic`, ascending and deduplicated.
    pub fn route(&self, topic: &str) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .subs
            .iter()
            .filter(|(_, s)| s.matches(topic))
            .map(|(i, _)| *i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subscription_table() {
        let cases: &[(Subscription, &str, bool)] = &[
            (Subscription::Prefix("tracks/".into()), "tracks/ego", true),
            (Subscription::Prefix("tracks/".into()), "tracks/", true),
            (Subscription::Prefix("tracks/".into()), "tracks", false),
            (Subscription::Prefix("tracks/".into()), "detections/ego", false),
            (Subscription::Prefix("".into()), "anything", true),
            (Subscription::Exact("tracks/ego".into()), "tracks/ego", true),
            (Subscription::Exact("tracks/ego".into()), "tracks/ego2", false),
            (Subscription::Exact("tracks/ego".into()), "tracks/", false),
        ];
        for (sub, topic, want) in cases {
            assert_eq!(sub.matches(topic), *want, "{sub:?} vs {topic}");
        }
    }

    #[test]
    fn router_dedups_and_sorts() {
        let mut r = Router::default();
        r.subscribe(2, Subscription::Prefix("tracks/".into()));
        r.subscribe(0, Subscription::Exact("tracks/a".into()));
        r.subscribe(2, Subscription::Exact("tracks/a".into()));
        assert_eq!(r.route("tracks/a"), vec![0, 2]);
        assert_eq!(r.route("tracks/b"), vec![2]);
        assert!(r.route("other").is_empty());
    }
}
