//! Random nets and oracle labeling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Net, Point};
use crate::rng::{derive_seed, DetRng};
use crate::rsmt::exact_rsmt;
use crate::train::LabeledNet;

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: u64,
    pub degree: usize,
    pub pins: Vec<[i64; 2]>,
    /// Canonical grid indices of the optimal Steiner points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wl_opt: Option<i64>,
}

impl DatasetRecord {
    pub fn from_net(net: &Net) -> Self {
        DatasetRecord {
            id: net.id(),
            degree: net.degree(),
            pins: net.pins().iter().map(|p| [p.x, p.y]).collect(),
            labels: None,
            wl_opt: None,
        }
    }

    /// Rebuilds the net, rejecting records whose pins repeat or whose degree
    /// disagrees with the pin list.
    pub fn to_net(&self) -> Result<Net> {
        let net = Net::new(self.id, self.pins.iter().map(|&[x, y]| Point::new(x, y)))?;
        if net.degree() != self.pins.len() || self.degree != self.pins.len() {
            return Err(Error::InvalidLabels {
                id: self.id,
                msg: format!(
                    "degree {} but {} pins ({} distinct)",
                    self.degree,
                    self.pins.len(),
                    net.degree()
                ),
            });
        }
        Ok(net)
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some() && self.wl_opt.is_some()
    }

    pub fn to_labeled(&self) -> Result<LabeledNet> {
        let net = self.to_net()?;
        match (&self.labels, self.wl_opt) {
            (Some(labels), Some(wl)) => LabeledNet::new(net, labels.clone(), wl),
            _ => Err(Error::MissingOracle(self.id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetFile {
    pub records: Vec<DatasetRecord>,
}

impl DatasetFile {
    pub fn nets(&self) -> Result<Vec<Net>> {
        self.records.iter().map(DatasetRecord::to_net).collect()
    }

    pub fn labeled(&self) -> Result<Vec<LabeledNet>> {
        self.records.iter().map(DatasetRecord::to_labeled).collect()
    }
}

/// `degree` distinct pins drawn uniformly from `[0, coord_max]²`; repeated
/// points are redrawn.
pub fn random_net(id: u64, degree: usize, seed: u64, coord_max: i64) -> Result<Net> {
    if degree < 2 {
        return Err(Error::DegreeTooSmall(degree));
    }
    if coord_max < 0 {
        return Err(Error::Config(format!("coord_max {coord_max} is negative")));
    }
    let side = coord_max as u128 + 1;
    if side * side < degree as u128 {
        return Err(Error::Config(format!(
            "cannot place {degree} distinct pins in [0, {coord_max}]²"
        )));
    }
    let mut rng = DetRng::new(seed);
    let mut pins: Vec<Point> = Vec::with_capacity(degree);
    while pins.len() < degree {
        let p = Point::new(
            rng.range_inclusive(0, coord_max),
            rng.range_inclusive(0, coord_max),
        );
        if !pins.contains(&p) {
            pins.push(p);
        }
    }
    Net::new(id, pins)
}

/// `nets_per_degree` unlabeled nets for each degree, ids `0..`, each from its
/// own sub-seed of `seed`.
pub fn generate_dataset(
    degrees: &[usize],
    nets_per_degree: usize,
    seed: u64,
    coord_max: i64,
) -> Result<DatasetFile> {
    if degrees.is_empty() {
        return Err(Error::Config("no degrees requested".into()));
    }
    let mut records = Vec::with_capacity(degrees.len() * nets_per_degree);
    let mut id = 0u64;
    for &degree in degrees {
        for _ in 0..nets_per_degree {
            let net = random_net(id, degree, derive_seed(seed, id), coord_max)?;
            records.push(DatasetRecord::from_net(&net));
            id += 1;
        }
    }
    Ok(DatasetFile { records })
}

/// Adds oracle labels and optimal wirelength to every record.
pub fn label_dataset(file: &DatasetFile, max_degree: usize) -> Result<DatasetFile> {
    let too_large: Vec<u64> = file
        .records
        .iter()
        .filter(|r| r.pins.len() > max_degree)
        .map(|r| r.id)
        .collect();
    if !too_large.is_empty() {
        return Err(Error::DegreeTooLarge {
            max_degree,
            ids: too_large,
        });
    }
    let records = file
        .records
        .par_iter()
        .map(|r| {
            let net = r.to_net()?;
            let sol = exact_rsmt(&net, max_degree)?;
            Ok(DatasetRecord {
                labels: Some(sol.steiner_set),
                wl_opt: Some(sol.optimal_wirelength),
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetFile { records })
}
