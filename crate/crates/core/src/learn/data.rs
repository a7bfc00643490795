use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::ItbnStructure;
use crate::timegrid::{Resolution, Timeline};

/// One observation: `process` took `value` at `ticks` (observation time,
/// in resolution units).
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub entity: String,
    pub ticks: i64,
    pub process: String,
    pub value: f64,
}

/// Observations of one entity on its own timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityData {
    timeline: Timeline,
    times: Vec<f64>,
    /// `values[slice][process]`
    values: Vec<Vec<Option<f64>>>,
}

impl EntityData {
    pub fn new(timeline: Timeline, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if values.len() != timeline.len() {
            return Err(Error::Data(format!(
                "{} value rows for a timeline of {} slices",
                values.len(),
                timeline.len()
            )));
        }
        let times = timeline.times();
        Ok(EntityData {
            timeline,
            times,
            values,
        })
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn entity(&self) -> &str {
        self.timeline.entity()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slice_count(&self) -> usize {
        self.times.len()
    }

    pub fn value(&self, slice: usize, process: usize) -> Option<f64> {
        self.values
            .get(slice)
            .and_then(|row| row.get(process))
            .copied()
            .flatten()
    }

    pub fn row(&self, slice: usize) -> &[Option<f64>] {
        &self.values[slice]
    }

    /// Linear interpolation of `process` at slice time `t` between its
    /// neighbouring observations; exact hits return the observation.
    pub fn interpolate(&self, process: usize, t: f64) -> Option<f64> {
        let mut before: Option<(f64, f64)> = None;
        for (j, &tj) in self.times.iter().enumerate() {
            let Some(v) = self.value(j, process) else {
                continue;
            };
            if crate::model::same_time(tj, t) {
                return Some(v);
            }
            if tj < t {
                before = Some((tj, v));
            } else {
                let (t0, v0) = before?;
                let w = (t - t0) / (tj - t0);
                return Some(v0 + w * (v - v0));
            }
        }
        None
    }

    /// Fully observed in the irregular sense: some prefix of slices is
    /// completely given and nothing after it.
    pub fn is_irregularly_complete(&self) -> bool {
        let full = |row: &Vec<Option<f64>>| row.iter().all(Option::is_some);
        let empty = |row: &Vec<Option<f64>>| row.iter().all(Option::is_none);
        let prefix = self.values.iter().take_while(|r| full(r)).count();
        self.values[prefix..].iter().all(empty)
    }
}

/// Observations of many entities, indexed by the processes of a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    process_names: Vec<String>,
    resolution: Resolution,
    entities: Vec<EntityData>,
}

impl ObservationSet {
    pub fn new(process_names: Vec<String>, resolution: Resolution) -> Self {
        ObservationSet {
            process_names,
            resolution,
            entities: Vec::new(),
        }
    }

    pub fn for_structure(structure: &ItbnStructure) -> Self {
        Self::new(
            structure.processes.iter().map(|p| p.name.clone()).collect(),
            structure.resolution,
        )
    }

    /// Groups records by entity (first-appearance order). A record of a
    /// process with offset `d` at time `t` lands in the slice at `t - d`.
    pub fn from_records(
        structure: &ItbnStructure,
        resolution: Resolution,
        records: &[Record],
    ) -> Result<Self> {
        let m = structure.process_count();
        let offsets = structure
            .processes
            .iter()
            .map(|p| resolution.ticks_from_f64(p.offset))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<&str> = Vec::new();
        let mut grouped: HashMap<&str, Vec<(i64, usize, f64)>> = HashMap::new();
        for r in records {
            let p = structure.process_index(&r.process).ok_or_else(|| {
                Error::Data(format!("unknown process `{}` in observations", r.process))
            })?;
            if !r.value.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value for `{}` at entity `{}`",
                    r.process, r.entity
                )));
            }
            let slot = grouped.entry(r.entity.as_str()).or_insert_with(|| {
                order.push(r.entity.as_str());
                Vec::new()
            });
            slot.push((r.ticks - offsets[p], p, r.value));
        }
        let mut set = ObservationSet::new(
            structure.processes.iter().map(|p| p.name.clone()).collect(),
            resolution,
        );
        for entity in order {
            let obs = &grouped[entity];
            let timeline =
                Timeline::from_unsorted(entity, obs.iter().map(|o| o.0).collect(), resolution)?;
            let mut values = vec![vec![None; m]; timeline.len()];
            for &(t, p, v) in obs {
                let j = timeline
                    .ticks()
                    .binary_search(&t)
                    .expect("tick is in the timeline");
                if values[j][p].replace(v).is_some() {
                    return Err(Error::Data(format!(
                        "duplicate observation of `{}` for entity `{}` at time {}",
                        structure.processes[p].name,
                        entity,
                        resolution.to_time(t + offsets[p])
                    )));
                }
            }
            set.push(EntityData::new(timeline, values)?)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, entity: EntityData) -> Result<()> {
        if entity
            .values
            .iter()
            .any(|r| r.len() != self.process_names.len())
        {
            return Err(Error::Data(format!(
                "entity `{}` rows do not have {} processes",
                entity.entity(),
                self.process_names.len()
            )));
        }
        self.entities.push(entity);
        Ok(())
    }

    pub fn process_names(&self) -> &[String] {
        &self.process_names
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn entities(&self) -> &[EntityData] {
        &self.entities
    }

    pub fn entity(&self, id: &str) -> Option<&EntityData> {
        self.entities.iter().find(|e| e.entity() == id)
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn observation_count(&self) -> usize {
        self.entities
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|r| r.iter().filter(|v| v.is_some()).count())
            .sum()
    }

    pub fn is_irregularly_complete(&self) -> bool {
        self.entities
            .iter()
            .all(EntityData::is_irregularly_complete)
    }

    /// Appends the entities of `other` (same processes).
    pub fn concat(&self, other: &ObservationSet) -> Result<ObservationSet> {
        if self.process_names != other.process_names {
            return Err(Error::Data(
                "cannot pool observation sets over different processes".into(),
            ));
        }
        let mut out = self.clone();
        out.entities.extend(other.entities.iter().cloned());
        Ok(out)
    }

    /// Flat records at observation times (slice time plus offset).
    pub fn to_records(&self, structure: &ItbnStructure) -> Result<Vec<Record>> {
        let offsets = structure
            .processes
            .iter()
            .map(|p| self.resolution.ticks_from_f64(p.offset))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for e in &self.entities {
            for (j, &t) in e.timeline.ticks().iter().enumerate() {
                for (p, v) in e.values[j].iter().enumerate() {
                    if let Some(v) = v {
                        out.push(Record {
                            entity: e.entity().to_string(),
                            ticks: t + offsets[p],
                            process: self.process_names[p].clone(),
                            value: *v,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}
