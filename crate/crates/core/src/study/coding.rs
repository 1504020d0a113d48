//! Clinical coding systems: Glasgow Coma Scale, the six-level WFNS grade and
//! the Glasgow Outcome Scale.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("GCS {component} score {value} outside {min}..={max}")]
    GcsComponent {
        component: &'static str,
        value: u8,
        min: u8,
        max: u8,
    },
    #[error("WFNS grade {0} outside 1..=6")]
    WfnsGrade(u8),
    #[error("WFNS grade 6 requires absent pupil reactivity")]
    Grade6WithReactivePupils,
    #[error("GOS category {0} outside 1..=5")]
    GosCategory(u8),
}

/// Glasgow Coma Scale assessment: eye 1-4, verbal 1-5, motor 1-6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcsAssessment {
    eye: u8,
    verbal: u8,
    motor: u8,
}

impl GcsAssessment {
    pub fn new(eye: u8, verbal: u8, motor: u8) -> Result<Self, CodingError> {
        for (component, value, max) in [("eye", eye, 4), ("verbal", verbal, 5), ("motor", motor, 6)] {
            if !(1..=max).contains(&value) {
                return Err(CodingError::GcsComponent {
                    component,
                    value,
                    min: 1,
                    max,
                });
            }
        }
        Ok(GcsAssessment { eye, verbal, motor })
    }

    pub fn eye(&self) -> u8 {
        self.eye
    }

    pub fn verbal(&self) -> u8 {
        self.verbal
    }

    pub fn motor(&self) -> u8 {
        self.motor
    }

    /// Sum of the three components, in 3..=15.
    pub fn total(&self) -> u8 {
        self.eye + self.verbal + self.motor
    }

    /// Every valid assessment (4 · 5 · 6 = 120 combinations).
    pub fn all() -> impl Iterator<Item = GcsAssessment> {
        (1..=4).flat_map(|e| {
            (1..=5).flat_map(move |v| (1..=6).map(move |m| GcsAssessment { eye: e, verbal: v, motor: m }))
        })
    }
}

/// WFNS grade extended to six levels: grade 6 is an original grade 5 without
/// pupil reaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct WfnsGrade(u8);

impl WfnsGrade {
    pub fn new(grade: u8) -> Result<Self, CodingError> {
        if (1..=6).contains(&grade) {
            Ok(WfnsGrade(grade))
        } else {
            Err(CodingError::WfnsGrade(grade))
        }
    }

    /// Builds a grade and checks it against the recorded pupil reactivity.
    pub fn with_pupils(grade: u8, pupils_reactive: bool) -> Result<Self, CodingError> {
        let g = Self::new(grade)?;
        if g.0 == 6 && pupils_reactive {
            return Err(CodingError::Grade6WithReactivePupils);
        }
        Ok(g)
    }

    pub fn grade(&self) -> u8 {
        self.0
    }

    pub fn as_continuous(&self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<u8> for WfnsGrade {
    type Error = CodingError;
    fn try_from(v: u8) -> Result<Self, CodingError> {
        WfnsGrade::new(v)
    }
}

impl From<WfnsGrade> for u8 {
    fn from(g: WfnsGrade) -> u8 {
        g.0
    }
}

impl fmt::Display for WfnsGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps a GCS assessment plus clinical flags to the extended WFNS grade.
pub fn wfns_from_gcs(gcs: GcsAssessment, focal_deficit: bool, pupils_reactive: bool) -> WfnsGrade {
    let grade = match gcs.total() {
        15 => 1,
        13..=14 if focal_deficit => 2,
        13..=14 => 3,
        7..=12 => 4,
        _ if pupils_reactive => 5,
        _ => 6,
    };
    WfnsGrade(grade)
}

/// Glasgow Outcome Scale, coded 1 (good recovery) to 5 (death).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GosCategory {
    GoodRecovery = 1,
    ModerateDisability = 2,
    SevereDisability = 3,
    PersistentVegetativeState = 4,
    Death = 5,
}

impl GosCategory {
    pub const ALL: [GosCategory; 5] = [
        GosCategory::GoodRecovery,
        GosCategory::ModerateDisability,
        GosCategory::SevereDisability,
        GosCategory::PersistentVegetativeState,
        GosCategory::Death,
    ];

    pub fn from_code(code: u8) -> Result<Self, CodingError> {
        Self::ALL
            .get(usize::from(code).wrapping_sub(1))
            .copied()
            .ok_or(CodingError::GosCategory(code))
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            GosCategory::GoodRecovery => "Good Recovery",
            GosCategory::ModerateDisability => "Moderate Disability",
            GosCategory::SevereDisability => "Severe Disability",
            GosCategory::PersistentVegetativeState => "Persistent Vegetative State",
            GosCategory::Death => "Death",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gcs_with_total(total: u8) -> GcsAssessment {
        GcsAssessment::all().find(|g| g.total() == total).unwrap()
    }

    #[test]
    fn component_ranges() {
        assert!(GcsAssessment::new(4, 5, 6).is_ok());
        assert!(GcsAssessment::new(0, 5, 6).is_err());
        assert!(GcsAssessment::new(5, 5, 6).is_err());
        assert!(GcsAssessment::new(4, 6, 6).is_err());
        assert!(GcsAssessment::new(4, 5, 7).is_err());
        assert_eq!(GcsAssessment::all().count(), 120);
        assert_eq!(GcsAssessment::all().map(|g| g.total()).min(), Some(3));
        assert_eq!(GcsAssessment::all().map(|g| g.total()).max(), Some(15));
    }

    #[test]
    fn documented_examples() {
        assert_eq!(wfns_from_gcs(gcs_with_total(15), false, true).grade(), 1);
        assert_eq!(wfns_from_gcs(gcs_with_total(15), true, false).grade(), 1);
        assert_eq!(wfns_from_gcs(gcs_with_total(13), true, true).grade(), 2);
        assert_eq!(wfns_from_gcs(gcs_with_total(4), true, false).grade(), 6);
        assert_eq!(wfns_from_gcs(gcs_with_total(8), false, true).grade(), 4);
    }

    #[test]
    fn grade_six_needs_absent_pupils() {
        assert!(WfnsGrade::with_pupils(6, false).is_ok());
        assert_eq!(
            WfnsGrade::with_pupils(6, true),
            Err(CodingError::Grade6WithReactivePupils)
        );
        assert!(WfnsGrade::new(0).is_err());
        assert!(WfnsGrade::new(7).is_err());
        assert_eq!(WfnsGrade::new(3).unwrap().as_continuous(), 3.0);
    }

    #[test]
    fn gos_table() {
        assert_eq!(GosCategory::from_code(1), Ok(GosCategory::GoodRecovery));
        assert_eq!(GosCategory::from_code(5), Ok(GosCategory::Death));
        assert!(GosCategory::from_code(0).is_err());
        assert!(GosCategory::from_code(6).is_err());
        for c in GosCategory::ALL {
            assert_eq!(GosCategory::from_code(c.code()), Ok(c));
        }
        assert_eq!(GosCategory::PersistentVegetativeState.label(), "Persistent Vegetative State");
    }
}
