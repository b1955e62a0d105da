//! Group flight mediation worlds: two users, each with a private and a shared
//! calendar and their own list of flights.
//!
//! Times are minutes since 5/31 00:00. The trip window covers three days.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GenError;

pub const WINDOW_DAYS: u32 = 3;
pub const WINDOW_MINUTES: u32 = WINDOW_DAYS * 24 * 60;
pub const SLOT_MINUTES: u32 = 30;
pub const EVENT_DURATIONS: [u32; 4] = [30, 60, 120, 240];
/// Calendar events are placed between 9 AM and 10 PM.
pub const DAY_START: u32 = 9 * 60;
pub const DAY_END: u32 = 22 * 60;
pub const PRICE_FLOOR: f64 = 50.0;
pub const CARRIERS: &[&str] = &["JetBlue", "Delta", "Alaska", "American", "United", "Southwest"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flight {
    pub id: usize,
    pub carrier: String,
    pub price: u32,
    pub depart: u32,
    pub arrive: u32,
}

impl Flight {
    /// `11 | Delta | 421 | 6/1 5:56 PM - 1:56 AM`
    pub fn row(&self) -> String {
        format!(
            "{} | {} | {} | {}",
            self.id,
            self.carrier,
            self.price,
            flight_times(self.depart, self.arrive)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalendarEvent {
    pub start: u32,
    pub end: u32,
    /// 1..=10, hidden from the assistant.
    pub importance: u32,
}

impl CalendarEvent {
    pub fn times(&self) -> String {
        event_times(self.start, self.end)
    }

    /// Half-open interval intersection with `[start, end)`.
    pub fn overlaps(&self, start: u32, end: u32) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediationUser {
    /// Sorted by departure; `flights[i].id == i`.
    pub flights: Vec<Flight>,
    /// Events only the user can see.
    pub private_events: Vec<CalendarEvent>,
    /// Work events the assistant also sees (without importance).
    pub shared_events: Vec<CalendarEvent>,
    /// Mean and standard deviation of this user's price distribution.
    pub price_mu: f64,
}

impl MediationUser {
    pub fn all_events(&self) -> impl Iterator<Item = &CalendarEvent> {
        self.private_events.iter().chain(self.shared_events.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediationWorld {
    pub p_event: f64,
    pub f_shared: f64,
    pub users: [MediationUser; 2],
    pub theta_price: f64,
    pub theta_arrival: f64,
}

pub(super) fn generate(
    rng: &mut ChaCha8Rng,
    p_event: f64,
    f_shared: f64,
    flights: usize,
) -> Result<MediationWorld, GenError> {
    if !(0.0..=1.0).contains(&p_event) || !(0.0..=1.0).contains(&f_shared) {
        return Err(GenError::InvalidParams(format!(
            "p_event={p_event} and f_shared={f_shared} must be probabilities"
        )));
    }
    if flights == 0 {
        return Err(GenError::InvalidParams("need at least one flight per user".into()));
    }
    let users = [
        random_user(rng, p_event, f_shared, flights),
        random_user(rng, p_event, f_shared, flights),
    ];
    Ok(MediationWorld {
        p_event,
        f_shared,
        users,
        theta_price: rng.random_range(1.0..=20.0),
        theta_arrival: rng.random_range(1.0..=10.0),
    })
}

fn random_user(rng: &mut ChaCha8Rng, p_event: f64, f_shared: f64, n_flights: usize) -> MediationUser {
    let mut events: Vec<(u32, u32)> = Vec::new();
    for day in 0..WINDOW_DAYS {
        let mut t = day * 1440 + DAY_START;
        while t < day * 1440 + DAY_END {
            let mut durations = EVENT_DURATIONS;
            durations.shuffle(rng);
            for d in durations {
                if !rng.random_bool(p_event) {
                    continue;
                }
                let end = t + d;
                if end > day * 1440 + DAY_END {
                    continue;
                }
                if events.iter().any(|&(s, e)| s < end && t < e) {
                    continue;
                }
                events.push((t, end));
            }
            t += SLOT_MINUTES;
        }
    }
    events.shuffle(rng);

    let mut private_events = Vec::new();
    let mut shared_events = Vec::new();
    for (start, end) in events {
        let event = CalendarEvent {
            start,
            end,
            importance: rng.random_range(1..=10),
        };
        if rng.random_bool(f_shared) {
            shared_events.push(event);
        } else {
            private_events.push(event);
        }
    }

    let price_mu: f64 = rng.random_range(50.0..=1000.0);
    let prices = Normal::new(price_mu, price_mu).expect("positive sigma");
    let mut flights: Vec<Flight> = (0..n_flights)
        .map(|_| {
            let duration = (rng.random_range(1.0..=10.0) * 60.0f64).round() as u32;
            let depart = rng.random_range(0..=WINDOW_MINUTES - duration);
            let price = prices.sample(rng).round().max(PRICE_FLOOR) as u32;
            Flight {
                id: 0,
                carrier: CARRIERS[rng.random_range(0..CARRIERS.len())].to_string(),
                price,
                depart,
                arrive: depart + duration,
            }
        })
        .collect();
    flights.sort_by_key(|f| (f.depart, f.arrive, f.price));
    for (i, f) in flights.iter_mut().enumerate() {
        f.id = i;
    }

    MediationUser {
        flights,
        private_events,
        shared_events,
        price_mu,
    }
}

/// `(month, day, hour24, minute)` for a minute offset from 5/31 00:00.
fn clock(minutes: u32) -> (u32, u32, u32, u32) {
    let day = minutes / 1440;
    let (month, dom) = if day == 0 { (5, 31) } else { (6, day) };
    let rem = minutes % 1440;
    (month, dom, rem / 60, rem % 60)
}

fn hour12(h: u32) -> (u32, &'static str) {
    let suffix = if h < 12 { "AM" } else { "PM" };
    let h = match h % 12 {
        0 => 12,
        x => x,
    };
    (h, suffix)
}

fn time_of_day(minutes: u32, always_minutes: bool) -> String {
    let (_, _, h, m) = clock(minutes);
    let (h, suffix) = hour12(h);
    if m == 0 && !always_minutes {
        format!("{h} {suffix}")
    } else {
        format!("{h}:{m:02} {suffix}")
    }
}

fn date(minutes: u32) -> String {
    let (month, day, _, _) = clock(minutes);
    format!("{month}/{day}")
}

/// `5/31 12:34 PM - 8:34 PM`
pub fn flight_times(depart: u32, arrive: u32) -> String {
    format!(
        "{} {} - {}",
        date(depart),
        time_of_day(depart, true),
        time_of_day(arrive, true)
    )
}

/// `6/2 2 PM - 2:30 PM`
pub fn event_times(start: u32, end: u32) -> String {
    format!(
        "{} {} - {}",
        date(start),
        time_of_day(start, false),
        time_of_day(end, false)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_formats() {
        assert_eq!(flight_times(12 * 60 + 34, 20 * 60 + 34), "5/31 12:34 PM - 8:34 PM");
        assert_eq!(
            flight_times(1440 + 17 * 60 + 56, 2 * 1440 + 60 + 56),
            "6/1 5:56 PM - 1:56 AM"
        );
        assert_eq!(
            event_times(2 * 1440 + 14 * 60, 2 * 1440 + 14 * 60 + 30),
            "6/2 2 PM - 2:30 PM"
        );
        assert_eq!(event_times(11 * 60 + 30, 12 * 60), "5/31 11:30 AM - 12 PM");
        assert_eq!(flight_times(17 * 60, 20 * 60), "5/31 5:00 PM - 8:00 PM");
    }
}
