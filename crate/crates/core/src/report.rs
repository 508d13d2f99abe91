//! CSV output of metrics frames.
//!
//! Every file starts with `#` lines holding the filter kind, trial count,
//! seed and the effective configuration in TOML, followed by one header row
//! and one row per time step:
//!
//! | column             | meaning                                              |
//! |--------------------|------------------------------------------------------|
//! | `node_id`          | distributed runs only: node id, or `avg`             |
//! | `k`                | time step, 1-based                                   |
//! | `ospa_m`           | OSPA distance in meters                              |
//! | `r`                | existence probability                                |
//! | `gamma_c{c}`       | class probability, one column per class              |
//! | `beta_c{c}_m{m}`   | mode probability, for classes with several modes     |
//! | `est_class`        | estimated class id, empty when no target is reported |
//! | `est_mode`         | estimated mode id, empty when no target is reported  |
//!
//! Averaged outputs hold per-step means over the trials, with the most
//! frequent decision in `est_class` and `est_mode`.

use std::io::{self, Write};

use crate::config::ScenarioConfig;
use crate::density::{ClassId, ModeId};
use crate::fusion::NodeId;
use crate::models::ClassLibrary;
use crate::sim::MetricsFrame;

/// Column set derived from a class library.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvLayout {
    classes: Vec<ClassId>,
    modes: Vec<(ClassId, ModeId)>,
}

/// Which series a file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Centralized,
    Node(NodeId),
    NetworkAverage,
}

impl CsvLayout {
    pub fn new(library: &ClassLibrary) -> Self {
        let classes = library.class_ids().collect();
        let modes = library
            .classes
            .iter()
            .filter(|c| c.modes.len() > 1)
            .flat_map(|c| c.modes.iter().map(move |&m| (c.id, m)))
            .collect();
        Self { classes, modes }
    }

    pub fn columns(&self, distributed: bool) -> Vec<String> {
        let mut cols = Vec::new();
        if distributed {
            cols.push("node_id".to_owned());
        }
        cols.extend(["k", "ospa_m", "r"].map(str::to_owned));
        cols.extend(self.classes.iter().map(|c| format!("gamma_c{}", c.0)));
        cols.extend(self.modes.iter().map(|(c, m)| format!("beta_c{}_m{}", c.0, m.0)));
        cols.extend(["est_class", "est_mode"].map(str::to_owned));
        cols
    }

    fn row(&self, series: Series, f: &MetricsFrame) -> Vec<String> {
        let mut row = Vec::new();
        match series {
            Series::Centralized => {}
            Series::Node(n) => row.push(n.0.to_string()),
            Series::NetworkAverage => row.push("avg".to_owned()),
        }
        row.push(f.k.to_string());
        row.push(format!("{:?}", f.ospa));
        row.push(format!("{:?}", f.existence));
        for c in &self.classes {
            row.push(format!("{:?}", f.class_pmf.get(c).copied().unwrap_or(0.0)));
        }
        for (c, m) in &self.modes {
            let p = f.mode_pmf.get(c).and_then(|modes| modes.get(m)).copied().unwrap_or(0.0);
            row.push(format!("{p:?}"));
        }
        row.push(f.est_class.map(|c| c.0.to_string()).unwrap_or_default());
        row.push(f.est_mode.map(|m| m.0.to_string()).unwrap_or_default());
        row
    }
}

/// Provenance written into the comment header.
#[derive(Debug, Clone, Copy)]
pub struct RunInfo<'a> {
    pub config: &'a ScenarioConfig,
    pub trials: usize,
    pub seed: u64,
}

pub fn write_csv<W: Write>(
    out: &mut W,
    info: RunInfo<'_>,
    layout: &CsvLayout,
    series: Series,
    frames: &[MetricsFrame],
) -> io::Result<()> {
    let label = match series {
        Series::Centralized => "centralized".to_owned(),
        Series::Node(n) => format!("distributed, node {}", n.0),
        Series::NetworkAverage => "distributed, network average".to_owned(),
    };
    writeln!(out, "# jdtc metrics: {label}")?;
    writeln!(out, "# trials = {}", info.trials)?;
    writeln!(out, "# seed = {}", info.seed)?;
    writeln!(out, "# effective configuration:")?;
    for line in info.config.to_toml_string().lines() {
        if line.is_empty() {
            writeln!(out, "#")?;
        } else {
            writeln!(out, "#   {line}")?;
        }
    }
    let distributed = series != Series::Centralized;
    writeln!(out, "{}", layout.columns(distributed).join(","))?;
    for f in frames {
        writeln!(out, "{}", layout.row(series, f).join(","))?;
    }
    Ok(())
}
