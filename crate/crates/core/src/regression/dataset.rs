use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::scalar::Scalar;

/// Named predictor columns plus a response, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    names: Vec<String>,
    columns: Vec<Vec<T>>,
    response: Vec<T>,
    /// Optional grouping (e.g. document) used for grouped fold assignment.
    groups: Option<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(names: Vec<String>, columns: Vec<Vec<T>>, response: Vec<T>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Contract(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some((name, col)) = names
            .iter()
            .zip(&columns)
            .find(|(_, c)| c.len() != response.len())
        {
            return Err(Error::Contract(format!(
                "column {name} has {} rows, response has {}",
                col.len(),
                response.len()
            )));
        }
        let distinct: BTreeSet<&String> = names.iter().collect();
        if distinct.len() != names.len() {
            return Err(Error::Contract("duplicate column names".to_owned()));
        }
        Ok(Dataset {
            names,
            columns,
            response,
            groups: None,
        })
    }

    /// Build from feature rows, taking the named columns as predictors and
    /// `rt` as the response. Rows are grouped by document.
    pub fn from_feature_rows(rows: &[FeatureRow], names: &[&str]) -> Result<Self> {
        let mut columns = Vec::with_capacity(names.len());
        for &name in names {
            if name == "rt" {
                return Err(Error::Config("rt is the response, not a predictor".to_owned()));
            }
            let col = rows
                .iter()
                .map(|r| {
                    r.value(name)
                        .map(T::of)
                        .ok_or_else(|| Error::Config(format!("unknown predictor '{name}'")))
                })
                .collect::<Result<Vec<T>>>()?;
            columns.push(col);
        }
        let response = rows.iter().map(|r| T::of(r.rt)).collect();
        let mut doc_ids: BTreeMap<&str, usize> = BTreeMap::new();
        for r in rows {
            let next = doc_ids.len();
            doc_ids.entry(&r.doc_id).or_insert(next);
        }
        let groups = rows.iter().map(|r| doc_ids[r.doc_id.as_str()]).collect();
        let mut data = Dataset::new(names.iter().map(|s| s.to_string()).collect(), columns, response)?;
        data.groups = Some(groups);
        Ok(data)
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::Contract("group vector length mismatch".to_owned()));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[T]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn response(&self) -> &[T] {
        &self.response
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    /// Replace the response (used by synthetic-data generators).
    pub fn set_response(&mut self, response: Vec<T>) -> Result<()> {
        if response.len() != self.len() {
            return Err(Error::Contract("response length mismatch".to_owned()));
        }
        self.response = response;
        Ok(())
    }

    /// Map each spec predictor to its column index, checking existence.
    pub(crate) fn resolve(&self, spec: &ModelSpec) -> Result<Vec<usize>> {
        spec.validate()?;
        spec.predictors
            .iter()
            .map(|p| {
                self.names
                    .iter()
                    .position(|n| n == p)
                    .ok_or_else(|| Error::Config(format!("unknown predictor '{p}'")))
            })
            .collect()
    }

    pub(crate) fn column_at(&self, idx: usize) -> &[T] {
        &self.columns[idx]
    }
}

/// A linear model: intercept plus the named predictors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub predictors: Vec<String>,
    /// z-score predictors within each training split.
    pub standardize: bool,
}

impl ModelSpec {
    pub fn new<S: AsRef<str>>(predictors: &[S]) -> Self {
        ModelSpec {
            predictors: predictors.iter().map(|p| p.as_ref().to_owned()).collect(),
            standardize: true,
        }
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    /// This spec plus additional predictors.
    pub fn extended<S: AsRef<str>>(&self, extra: &[S]) -> Self {
        let mut spec = self.clone();
        spec.predictors
            .extend(extra.iter().map(|p| p.as_ref().to_owned()));
        spec
    }

    /// This spec without the given predictors.
    pub fn without<S: AsRef<str>>(&self, drop: &[S]) -> Self {
        let mut spec = self.clone();
        spec.predictors
            .retain(|p| !drop.iter().any(|d| d.as_ref() == p));
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let distinct: BTreeSet<&String> = self.predictors.iter().collect();
        if distinct.len() != self.predictors.len() {
            return Err(Error::Config(format!(
                "duplicate predictors in {:?}",
                self.predictors
            )));
        }
        if self.predictors.iter().any(|p| p == "rt") {
            return Err(Error::Config(
                "the response rt cannot be a predictor".to_owned(),
            ));
        }
        Ok(())
    }

    pub fn contains_all(&self, other: &ModelSpec) -> bool {
        other.predictors.iter().all(|p| self.predictors.contains(p))
    }

    /// Number of design columns including the intercept.
    pub fn width(&self) -> usize {
        self.predictors.len() + 1
    }
}
