use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::schedule::FlightSchedule;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub category: usize,
    pub time: f64,
}

/// Time-ordered passenger arrivals for one day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArrivalTrace {
    pub events: Vec<Arrival>,
}

impl ArrivalTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn from_events(mut events: Vec<Arrival>) -> Self {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        ArrivalTrace { events }
    }
}

const MAX_REJECTIONS: usize = 256;

fn truncated_normal<R: Rng + ?Sized>(normal: &Normal<f64>, lo: f64, hi: f64, rng: &mut R) -> f64 {
    for _ in 0..MAX_REJECTIONS {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    normal.sample(rng).clamp(lo, hi)
}

/// Samples one day of arrivals. Category indices follow the game layout
/// `c = θ·|K| + κ` with `|K|` the number of scheduled flights.
pub fn sample_arrivals_with<R: Rng + ?Sized>(schedule: &FlightSchedule, priors: &[f64], rng: &mut R) -> ArrivalTrace {
    let k = schedule.num_flights();
    let theta_dist = WeightedIndex::new(priors).expect("priors are positive");
    let mut events = Vec::with_capacity(schedule.total_passengers());
    for (kappa, f) in schedule.flights.iter().enumerate() {
        let normal = Normal::new(f.mean_arrival(), f.sigma_min).expect("sigma is positive");
        for _ in 0..f.passengers {
            let time = truncated_normal(&normal, 0.0, f.departure_min, rng);
            let theta = theta_dist.sample(rng);
            events.push(Arrival { category: theta * k + kappa, time });
        }
    }
    ArrivalTrace::from_events(events)
}

pub fn sample_arrivals(schedule: &FlightSchedule, priors: &[f64], seed: u64) -> ArrivalTrace {
    sample_arrivals_with(schedule, priors, &mut stream(seed, Stream::Trace))
}
