use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

pub const DEFAULT_SIGMA_MIN: f64 = 45.0;
pub const DEFAULT_PASSENGERS: usize = 30;
pub const DAY_LENGTH_MIN: f64 = 1440.0;

const BUNDLED: &str = include_str!("../../data/schedule_10.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFlight {
    pub flight_id: String,
    pub departure_min: f64,
    pub passengers: usize,
    /// Standard deviation of the arrival time, in minutes.
    pub sigma_min: f64,
}

impl ScheduledFlight {
    /// Mean arrival time; the 2σ window before the mean ends at departure.
    pub fn mean_arrival(&self) -> f64 {
        self.departure_min - 2.0 * self.sigma_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightSchedule {
    pub flights: Vec<ScheduledFlight>,
    pub day_length: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    flight_id: String,
    departure_min: f64,
    passengers: usize,
    sigma_min: Option<f64>,
}

impl FlightSchedule {
    pub fn new(flights: Vec<ScheduledFlight>) -> Result<Self, EnvError> {
        let s = FlightSchedule { flights, day_length: DAY_LENGTH_MIN };
        s.validate()?;
        Ok(s)
    }

    /// The ten-flight synthetic day shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED).expect("bundled schedule parses")
    }

    /// One flight per departure time with shared passenger count and spread.
    pub fn from_departures(departures: &[f64], passengers: usize, sigma_min: f64) -> Result<Self, EnvError> {
        let flights = departures
            .iter()
            .enumerate()
            .map(|(i, &departure_min)| ScheduledFlight {
                flight_id: format!("F{:02}", i + 1),
                departure_min,
                passengers,
                sigma_min,
            })
            .collect();
        Self::new(flights)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        for f in &self.flights {
            if !(0.0..=self.day_length).contains(&f.departure_min) {
                return Err(EnvError::Schedule(format!(
                    "flight {} departs at {} outside [0, {}]",
                    f.flight_id, f.departure_min, self.day_length
                )));
            }
            if !(f.sigma_min > 0.0) || !f.sigma_min.is_finite() {
                return Err(EnvError::Schedule(format!("flight {} has sigma {} (must be > 0)", f.flight_id, f.sigma_min)));
            }
        }
        Ok(())
    }

    pub fn num_flights(&self) -> usize {
        self.flights.len()
    }

    pub fn total_passengers(&self) -> usize {
        self.flights.iter().map(|f| f.passengers).sum()
    }

    /// Same schedule with every flight's arrival spread replaced.
    pub fn with_sigma(&self, sigma_min: f64) -> Self {
        let mut s = self.clone();
        s.flights.iter_mut().for_each(|f| f.sigma_min = sigma_min);
        s
    }

    pub fn departures(&self) -> Vec<f64> {
        self.flights.iter().map(|f| f.departure_min).collect()
    }

    pub fn from_csv_str(text: &str) -> Result<Self, EnvError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| EnvError::Schedule(e.to_string()))?.clone();
        let expected = ["flight_id", "departure_min", "passengers", "sigma_min"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected && got != expected[..3] {
            return Err(EnvError::Schedule(format!("unexpected header {got:?}, expected {}", expected.join(","))));
        }
        let mut flights = Vec::new();
        for row in reader.deserialize::<CsvRow>() {
            let row = row.map_err(|e| EnvError::Schedule(e.to_string()))?;
            flights.push(ScheduledFlight {
                flight_id: row.flight_id,
                departure_min: row.departure_min,
                passengers: row.passengers,
                sigma_min: row.sigma_min.unwrap_or(DEFAULT_SIGMA_MIN),
            });
        }
        Self::new(flights)
    }

    pub fn from_path(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Schedule(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for f in &self.flights {
            w.serialize(CsvRow {
                flight_id: f.flight_id.clone(),
                departure_min: f.departure_min,
                passengers: f.passengers,
                sigma_min: Some(f.sigma_min),
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_schedule_has_ten_flights() {
        let s = FlightSchedule::bundled();
        assert_eq!(s.num_flights(), 10);
        assert!(s.flights.iter().all(|f| f.passengers == DEFAULT_PASSENGERS));
    }

    #[test]
    fn sigma_column_is_optional() {
        let s = FlightSchedule::from_csv_str("flight_id,departure_min,passengers,sigma_min\nA,600,12,\nB,700,5,20\n").unwrap();
        assert_eq!(s.flights[0].sigma_min, DEFAULT_SIGMA_MIN);
        assert_eq!(s.flights[1].sigma_min, 20.0);
        let s = FlightSchedule::from_csv_str("flight_id,departure_min,passengers\nA,600,12\n").unwrap();
        assert_eq!(s.flights[0].sigma_min, DEFAULT_SIGMA_MIN);
    }

    #[test]
    fn csv_round_trip() {
        let s = FlightSchedule::bundled();
        assert_eq!(FlightSchedule::from_csv_str(&s.to_csv_string()).unwrap(), s);
        assert!(s.to_csv_string().starts_with("flight_id,departure_min,passengers,sigma_min\n"));
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(FlightSchedule::from_csv_str("id,dep\nA,1\n").is_err());
        assert!(FlightSchedule::from_csv_str("flight_id,departure_min,passengers,sigma_min\nA,2000,1,5\n").is_err());
        assert!(FlightSchedule::from_csv_str("flight_id,departure_min,passengers,sigma_min\nA,200,1,0\n").is_err());
    }
}
