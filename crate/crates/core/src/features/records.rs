//! Raw cycling records and their grouping into per-cycle profiles.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    #[serde(rename = "cc_charge")]
    CcCharge,
    #[serde(rename = "cv_charge")]
    CvCharge,
    #[serde(rename = "discharge")]
    Discharge,
    #[serde(rename = "rest")]
    Rest,
}

impl Step {
    pub fn tag(self) -> &'static str {
        match self {
            Step::CcCharge => "cc_charge",
            Step::CvCharge => "cv_charge",
            Step::Discharge => "discharge",
            Step::Rest => "rest",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cc_charge" => Ok(Step::CcCharge),
            "cv_charge" => Ok(Step::CvCharge),
            "discharge" => Ok(Step::Discharge),
            "rest" => Ok(Step::Rest),
            other => Err(Error::Parse(format!("unknown step tag '{other}'"))),
        }
    }
}

/// One measurement: time in seconds, current in amperes (+ = charge), voltage
/// in volts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub step: Step,
    pub t: f64,
    pub current: f64,
    pub voltage: f64,
}

/// All samples of one `(cell, cycle)` in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecords {
    pub cell_id: String,
    pub cycle_index: u32,
    pub samples: Vec<Sample>,
}

/// Flat row of the cycling-record table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclingRecord {
    pub cell_id: String,
    pub cycle_index: u32,
    pub step: Step,
    pub t_s: f64,
    pub current_a: f64,
    pub voltage_v: f64,
}

/// Time/current/voltage triple inside one step segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub t: f64,
    pub current: f64,
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleProfile {
    pub cell_id: String,
    pub cycle_index: u32,
    pub cc: Vec<Point>,
    pub cv: Vec<Point>,
    pub discharge: Vec<Point>,
}

/// Groups one cycle's samples by step tag and validates each segment.
///
/// Fails with [`Error::Skipped`] when the CC or discharge step is absent and
/// with [`Error::Validation`] when time does not strictly increase inside a
/// step or a voltage is not positive.
pub fn segment_cycle(records: &CycleRecords) -> Result<CycleProfile> {
    let mut profile = CycleProfile {
        cell_id: records.cell_id.clone(),
        cycle_index: records.cycle_index,
        cc: Vec::new(),
        cv: Vec::new(),
        discharge: Vec::new(),
    };
    let mut rest_last: Option<f64> = None;
    for s in &records.samples {
        if !(s.voltage > 0.0) || !s.t.is_finite() || !s.current.is_finite() {
            return Err(Error::Validation(format!(
                "cell {} cycle {}: bad sample at t={} (V={}, I={})",
                records.cell_id, records.cycle_index, s.t, s.voltage, s.current
            )));
        }
        let seg = match s.step {
            Step::CcCharge => &mut profile.cc,
            Step::CvCharge => &mut profile.cv,
            Step::Discharge => &mut profile.discharge,
            Step::Rest => {
                if rest_last.is_some_and(|t| s.t <= t) {
                    return Err(out_of_order(records, s));
                }
                rest_last = Some(s.t);
                continue;
            }
        };
        if seg.last().is_some_and(|p| s.t <= p.t) {
            return Err(out_of_order(records, s));
        }
        seg.push(Point {
            t: s.t,
            current: s.current,
            voltage: s.voltage,
        });
    }
    if profile.cc.is_empty() {
        return Err(Error::Skipped(format!(
            "cell {} cycle {}: no CC charge step",
            records.cell_id, records.cycle_index
        )));
    }
    if profile.discharge.is_empty() {
        return Err(Error::Skipped(format!(
            "cell {} cycle {}: no discharge step",
            records.cell_id, records.cycle_index
        )));
    }
    Ok(profile)
}

fn out_of_order(records: &CycleRecords, s: &Sample) -> Error {
    Error::Validation(format!(
        "cell {} cycle {}: time not increasing within {} at t={}",
        records.cell_id, records.cycle_index, s.step, s.t
    ))
}

/// Reads a cycling-record table and groups it by `(cell_id, cycle_index)` in
/// order of first appearance.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<CycleRecords>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: Vec<CycleRecords> = Vec::new();
    let mut index = std::collections::HashMap::<(String, u32), usize>::new();
    for row in rdr.deserialize::<CyclingRecord>() {
        let r = row?;
        let key = (r.cell_id.clone(), r.cycle_index);
        let slot = *index.entry(key).or_insert_with(|| {
            out.push(CycleRecords {
                cell_id: r.cell_id.clone(),
                cycle_index: r.cycle_index,
                samples: Vec::new(),
            });
            out.len() - 1
        });
        out[slot].samples.push(Sample {
            step: r.step,
            t: r.t_s,
            current: r.current_a,
            voltage: r.voltage_v,
        });
    }
    Ok(out)
}

pub fn write_records<W: Write>(writer: W, cycles: &[CycleRecords]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cell_id", "cycle_index", "step", "t_s", "current_a", "voltage_v"])?;
    for c in cycles {
        let idx = c.cycle_index.to_string();
        for s in &c.samples {
            w.write_record([
                c.cell_id.as_str(),
                idx.as_str(),
                s.step.tag(),
                &s.t.to_string(),
                &s.current.to_string(),
                &s.voltage.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(step: Step, t: f64) -> Sample {
        Sample {
            step,
            t,
            current: 1.0,
            voltage: 3.7,
        }
    }

    fn cycle(samples: Vec<Sample>) -> CycleRecords {
        CycleRecords {
            cell_id: "c1".into(),
            cycle_index: 4,
            samples,
        }
    }

    #[test]
    fn three_step_cycle_segments() {
        let rec = cycle(vec![
            sample(Step::CcCharge, 0.0),
            sample(Step::CcCharge, 10.0),
            sample(Step::CvCharge, 20.0),
            sample(Step::Rest, 25.0),
            sample(Step::Discharge, 30.0),
            sample(Step::Discharge, 40.0),
        ]);
        let p = segment_cycle(&rec).unwrap();
        assert_eq!((p.cc.len(), p.cv.len(), p.discharge.len()), (2, 1, 2));
    }

    #[test]
    fn rest_only_cycle_is_skipped() {
        let rec = cycle(vec![sample(Step::Rest, 0.0), sample(Step::Rest, 1.0)]);
        assert!(matches!(segment_cycle(&rec), Err(Error::Skipped(_))));
        let no_dis = cycle(vec![sample(Step::CcCharge, 0.0)]);
        assert!(matches!(segment_cycle(&no_dis), Err(Error::Skipped(_))));
    }

    #[test]
    fn out_of_order_time_rejected() {
        let rec = cycle(vec![
            sample(Step::CcCharge, 10.0),
            sample(Step::CcCharge, 5.0),
            sample(Step::Discharge, 30.0),
        ]);
        assert!(matches!(segment_cycle(&rec), Err(Error::Validation(_))));
        let mut bad_v = cycle(vec![sample(Step::CcCharge, 0.0), sample(Step::Discharge, 1.0)]);
        bad_v.samples[0].voltage = 0.0;
        assert!(matches!(segment_cycle(&bad_v), Err(Error::Validation(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rec = vec![
            cycle(vec![sample(Step::CcCharge, 0.0), sample(Step::Discharge, 1.5)]),
            CycleRecords {
                cell_id: "c2".into(),
                cycle_index: 1,
                samples: vec![sample(Step::Rest, 0.25)],
            },
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &rec).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cell_id,cycle_index,step,t_s,current_a,voltage_v\n"));
        assert!(text.contains("c1,4,cc_charge,0,1,3.7"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), rec);
    }

    #[test]
    fn unknown_step_tag_fails() {
        let text = "cell_id,cycle_index,step,t_s,current_a,voltage_v\nc,1,boost,0,1,3\n";
        assert!(read_records(text.as_bytes()).is_err());
    }
}
