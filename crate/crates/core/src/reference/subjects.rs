use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub id: u32,
    pub sex: String,
    /// [kg]
    pub mass: f64,
    /// [cm]
    pub height: f64,
    /// [yr]
    pub age: u32,
    /// Self-selected walking speed [m/s].
    pub speed: f64,
}

impl SubjectSpec {
    pub fn height_m(&self) -> f64 {
        self.height / 100.0
    }

    pub fn weight(&self) -> f64 {
        self.mass * 9.81
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.mass > 0.0 && self.height > 0.0 && self.age > 0 && self.speed > 0.0) {
            return Err(Error::Config(format!(
                "subject {}: mass, height, age and speed must be positive",
                self.id
            )));
        }
        if self.speed >= 3.0 {
            return Err(Error::Config(format!(
                "subject {}: walking speed {} m/s must be below 3 m/s",
                self.id, self.speed
            )));
        }
        Ok(())
    }

    /// Subject `id` (1-based) from the built-in roster.
    pub fn from_roster(id: u32) -> Result<Self, Error> {
        roster()
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Config(format!("no subject {id} in the roster (1..=10)")))
    }
}

/// Ten walking subjects (sex, mass, height, age, speed). Subject 5's mass and
/// height are stored as 64 kg / 153 cm; the source table has them transposed.
pub fn roster() -> Vec<SubjectSpec> {
    const ROWS: [(u32, &str, f64, f64, u32, f64); 10] = [
        (1, "M", 74.0, 172.40, 25, 1.25),
        (2, "M", 52.9, 166.80, 22, 1.40),
        (3, "F", 48.8, 158.0, 24, 1.15),
        (4, "M", 61.5, 180.70, 22, 1.28),
        (5, "F", 64.0, 153.0, 31, 1.09),
        (6, "M", 69.85, 155.0, 38, 1.3),
        (7, "F", 64.6, 151.50, 57, 0.91),
        (8, "M", 63.3, 175.0, 71, 0.57),
        (9, "F", 46.05, 149.20, 63, 0.80),
        (10, "M", 66.35, 155.50, 84, 0.60),
    ];
    ROWS.iter()
        .map(|&(id, sex, mass, height, age, speed)| SubjectSpec {
            id,
            sex: sex.to_string(),
            mass,
            height,
            age,
            speed,
        })
        .collect()
}

pub fn write_roster(path: &Path, subjects: &[SubjectSpec]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for s in subjects {
        w.serialize(s).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_roster(path: &Path) -> Result<Vec<SubjectSpec>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let s: SubjectSpec = row.map_err(|e| Error::csv(path, e))?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}
