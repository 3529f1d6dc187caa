use std::collections::BTreeMap;

use nalgebra::Vector3;
use thiserror::Error;

use super::fusion::chordal_mean;
use super::CardPoseEstimate;
use crate::registry::CardRef;

/// Rotational jitter above this (degrees) degrades manipulation.
pub const ROTATIONAL_JITTER_LIMIT_DEG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JitterError {
    #[error("need a window of at least 2 samples, got {0}")]
    InsufficientHistory(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardJitter {
    pub card: CardRef,
    pub samples: usize,
    /// RMS distance (m) of the window's translations from their mean.
    pub positional_sigma: f64,
    /// RMS geodesic angle (degrees) of the window's rotations from their chordal mean.
    pub rotational_sigma_deg: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterReport {
    pub window: usize,
    pub cards: Vec<CardJitter>,
}

impl JitterReport {
    pub fn card(&self, card: CardRef) -> Option<&CardJitter> {
        self.cards.iter().find(|c| c.card == card)
    }
}

/// Jitter over the most recent `window` estimates of each card in `history`.
/// Cards with fewer than two samples are left out of the report.
pub fn jitter_metrics(history: &[CardPoseEstimate], window: usize) -> Result<JitterReport, JitterError> {
    if window < 2 {
        return Err(JitterError::InsufficientHistory(window));
    }
    let mut per_card: BTreeMap<CardRef, Vec<&CardPoseEstimate>> = BTreeMap::new();
    for e in history {
        per_card.entry(e.card).or_default().push(e);
    }
    let mut cards = Vec::new();
    for (card, samples) in per_card {
        let recent = &samples[samples.len().saturating_sub(window)..];
        if recent.len() < 2 {
            continue;
        }
        let n = recent.len() as f64;
        let mean_t = recent
            .iter()
            .fold(Vector3::zeros(), |acc, e| acc + e.pose.translation)
            / n;
        let positional_sigma = (recent
            .iter()
            .map(|e| (e.pose.translation - mean_t).norm_squared())
            .sum::<f64>()
            / n)
            .sqrt();
        let rots: Vec<_> = recent.iter().map(|e| (e.pose.rotation, 1.0)).collect();
        let mean_r = chordal_mean(&rots);
        let rotational_sigma_deg = (recent
            .iter()
            .map(|e| mean_r.angle_to(&e.pose.rotation).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            .to_degrees();
        cards.push(CardJitter {
            card,
            samples: recent.len(),
            positional_sigma,
            rotational_sigma_deg,
            flagged: rotational_sigma_deg > ROTATIONAL_JITTER_LIMIT_DEG,
        });
    }
    Ok(JitterReport { window, cards })
}
