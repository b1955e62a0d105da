//! Mediation reward: missed meetings, price and arrival closeness per user.

use super::breakdown::{
    ChecklistEntry, RewardBreakdown, ScoreItem, CLOSENESS_LABEL, MEETINGS_LABEL, PRICE_LABEL,
};
use super::ScoringError;
use crate::worldgen::mediation::{event_times, MediationWorld};

/// Components of one user's score for one flight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserComponents {
    pub meetings: f64,
    pub price: f64,
    /// Half of the joint closeness penalty; `None` when the other user's
    /// flight is unknown.
    pub closeness: Option<f64>,
}

impl UserComponents {
    pub fn total(&self) -> f64 {
        self.meetings + self.price + self.closeness.unwrap_or(0.0)
    }
}

pub fn check_flight(world: &MediationWorld, user: usize, flight: usize) -> Result<(), ScoringError> {
    if flight >= world.users[user].flights.len() {
        return Err(ScoringError::UnknownFlight { user, flight });
    }
    Ok(())
}

/// Joint closeness penalty: `-theta_arrival * |arrival difference in hours|`.
pub fn closeness_penalty(world: &MediationWorld, f0: usize, f1: usize) -> f64 {
    let a = world.users[0].flights[f0].arrive as f64;
    let b = world.users[1].flights[f1].arrive as f64;
    -world.theta_arrival * (a - b).abs() / 60.0
}

pub fn user_components(
    world: &MediationWorld,
    user: usize,
    flight: usize,
    other_flight: Option<usize>,
) -> UserComponents {
    let u = &world.users[user];
    let f = &u.flights[flight];
    let meetings = -u
        .all_events()
        .filter(|e| e.overlaps(f.depart, f.arrive))
        .map(|e| e.importance as f64)
        .sum::<f64>();
    let price = world.theta_price * (u.price_mu - f.price as f64) / u.price_mu;
    let closeness = other_flight.map(|o| {
        let (f0, f1) = if user == 0 { (flight, o) } else { (o, flight) };
        closeness_penalty(world, f0, f1) / 2.0
    });
    UserComponents {
        meetings,
        price,
        closeness,
    }
}

/// Joint raw reward for a full assignment: the sum of both users' totals.
pub fn joint_value(world: &MediationWorld, f0: usize, f1: usize) -> f64 {
    user_components(world, 0, f0, Some(f1)).total() + user_components(world, 1, f1, Some(f0)).total()
}

/// The scorecard one user sees for their proposed flight.
pub fn user_breakdown(
    world: &MediationWorld,
    user: usize,
    flight: usize,
    other_flight: Option<usize>,
) -> RewardBreakdown {
    let u = &world.users[user];
    let f = &u.flights[flight];
    let c = user_components(world, user, flight, other_flight);
    let mut conflicts: Vec<_> = u
        .all_events()
        .filter(|e| e.overlaps(f.depart, f.arrive))
        .collect();
    conflicts.sort_by_key(|e| e.start);
    let mut items = vec![
        ScoreItem {
            label: MEETINGS_LABEL.into(),
            score: Some(c.meetings),
            details: conflicts
                .iter()
                .map(|e| format!("({}) | {}", e.importance, event_times(e.start, e.end)))
                .collect(),
        },
        ScoreItem {
            label: PRICE_LABEL.into(),
            score: Some(c.price),
            details: vec![],
        },
    ];
    if let Some(closeness) = c.closeness {
        items.push(ScoreItem {
            label: CLOSENESS_LABEL.into(),
            score: Some(closeness),
            details: vec![],
        });
    }
    RewardBreakdown::new(Some(f.row()), items, Vec::<ChecklistEntry>::new())
}

/// Raw joint reward and per-user scorecards for a full assignment.
pub fn score_flights(
    world: &MediationWorld,
    assignment: &[Option<usize>],
) -> Result<(f64, [RewardBreakdown; 2]), ScoringError> {
    let (Some(f0), Some(f1)) = (
        assignment.first().copied().flatten(),
        assignment.get(1).copied().flatten(),
    ) else {
        return Err(ScoringError::Incomplete("every user needs a flight".into()));
    };
    check_flight(world, 0, f0)?;
    check_flight(world, 1, f1)?;
    let b0 = user_breakdown(world, 0, f0, Some(f1));
    let b1 = user_breakdown(world, 1, f1, Some(f0));
    Ok((joint_value(world, f0, f1), [b0, b1]))
}
