use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cohortsim::Group;
use crate::error::{invalid, Error, Result};
use crate::speechfeat::FeatureName;

/// Number of classifier inputs: eleven accuracies and age.
pub const N_PROFILE_FEATURES: usize = 12;

/// Column names of the classifier input, in order.
pub fn profile_feature_names() -> Vec<String> {
    FeatureName::ALL.iter().map(|f| f.as_str().to_string()).chain(["age".to_string()]).collect()
}

/// Per-subject match-mismatch accuracies and age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingProfile {
    pub subject_id: String,
    pub group: Group,
    pub age: f64,
    pub accuracies: BTreeMap<FeatureName, f64>,
}

impl TrackingProfile {
    pub fn new(subject_id: &str, group: Group, age: f64, accuracies: BTreeMap<FeatureName, f64>) -> Result<Self> {
        let p = Self { subject_id: subject_id.to_string(), group, age, accuracies };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.accuracies.len() != FeatureName::ALL.len() {
            return Err(invalid(format!(
                "profile `{}` has {} accuracies, expected {}",
                self.subject_id,
                self.accuracies.len(),
                FeatureName::ALL.len()
            )));
        }
        if let Some((f, a)) = self.accuracies.iter().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
            return Err(invalid(format!("accuracy of `{f}` for `{}` is {a}", self.subject_id)));
        }
        if !self.age.is_finite() {
            return Err(invalid(format!("age of `{}` is not finite", self.subject_id)));
        }
        Ok(())
    }

    /// Classifier input in [`profile_feature_names`] order.
    pub fn feature_vector(&self) -> Vec<f64> {
        FeatureName::ALL.iter().map(|f| self.accuracies[f]).chain([self.age]).collect()
    }

    pub fn is_patient(&self) -> bool {
        self.group == Group::Patient
    }
}

pub fn write_profiles_csv<W: Write>(profiles: &[TrackingProfile], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["subject_id".to_string(), "group".into(), "age".into()];
    header.extend(FeatureName::ALL.iter().map(|f| f.as_str().to_string()));
    out.write_record(&header).map_err(csv_err)?;
    for p in profiles {
        let mut rec = vec![p.subject_id.clone(), p.group.as_str().into(), format!("{}", p.age)];
        rec.extend(FeatureName::ALL.iter().map(|f| format!("{}", p.accuracies[f])));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_profiles_csv<R: Read>(r: R) -> Result<Vec<TrackingProfile>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Format(format!("profiles CSV lacks column `{name}`")))
    };
    let (ci, cg, ca) = (col("subject_id")?, col("group")?, col("age")?);
    let feats = FeatureName::ALL.iter().map(|f| Ok((*f, col(f.as_str())?))).collect::<Result<Vec<_>>>()?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("`{s}` is not a number")));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let group = Group::parse(&rec[cg]).ok_or_else(|| Error::Format(format!("unknown group `{}`", &rec[cg])))?;
        let mut acc = BTreeMap::new();
        for (f, c) in &feats {
            acc.insert(*f, num(&rec[*c])?);
        }
        out.push(TrackingProfile::new(&rec[ci], group, num(&rec[ca])?, acc)?);
    }
    Ok(out)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let acc: BTreeMap<_, _> = FeatureName::ALL.iter().enumerate().map(|(i, f)| (*f, 0.5 + i as f64 / 100.0)).collect();
        let p = vec![
            TrackingProfile::new("a", Group::Control, 70.5, acc.clone()).unwrap(),
            TrackingProfile::new("b", Group::Patient, 81.0, acc).unwrap(),
        ];
        let mut buf = Vec::new();
        write_profiles_csv(&p, &mut buf).unwrap();
        assert_eq!(read_profiles_csv(&buf[..]).unwrap(), p);
        assert_eq!(p[0].feature_vector().len(), N_PROFILE_FEATURES);
    }

    #[test]
    fn incomplete_profile_rejected() {
        let acc: BTreeMap<_, _> = [(FeatureName::WordOnset, 0.6)].into_iter().collect();
        assert!(TrackingProfile::new("a", Group::Control, 70.0, acc).is_err());
    }
}
