//! On-disk formats: the constants file and the curve table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use consensim::cost::{EtcConstants, LoadPoint};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const CURVE_HEADER: &str = "n,rho,cost_tt_tdma,cost_et_pa,p_pa";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// Taken from `SOURCE_DATE_EPOCH` when set, so reruns stay byte-identical.
    pub timestamp: Option<String>,
    pub config_digest: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_digest: String, seed: u64) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
            config_digest,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsFile {
    pub format_version: u32,
    pub provenance: Provenance,
    /// Sorted by agent count, at most one entry each.
    pub entries: Vec<EtcConstants>,
}

impl ConstantsFile {
    pub fn new(provenance: Provenance, entries: impl IntoIterator<Item = EtcConstants>) -> Self {
        let by_n: BTreeMap<u32, EtcConstants> =
            entries.into_iter().map(|c| (c.num_agents, c)).collect();
        ConstantsFile {
            format_version: FORMAT_VERSION,
            provenance,
            entries: by_n.into_values().collect(),
        }
    }

    pub fn by_n(&self) -> BTreeMap<u32, EtcConstants> {
        self.entries
            .iter()
            .map(|c| (c.num_agents, c.clone()))
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("not a constants file: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "constants format_version {} is not supported (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let file: ConstantsFile = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("malformed constants file: {e}")))?;
        let mut seen = std::collections::BTreeSet::new();
        if let Some(c) = file.entries.iter().find(|c| !seen.insert(c.num_agents)) {
            return Err(CliError::Config(format!(
                "constants file has two entries for n = {}",
                c.num_agents
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("constants serialize");
        text.push('\n');
        text
    }
}

fn csv_real(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// CSV with a leading `#` provenance line and the fixed header.
pub fn curves_csv(points: &[LoadPoint], seed: u64, config_digest: &str) -> String {
    let mut out = format!("# seed={seed} config_digest={config_digest}\n{CURVE_HEADER}\n");
    for p in points {
        let tdma = p.cost_tt_tdma.map(csv_real).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            p.num_agents,
            csv_real(p.rho),
            tdma,
            csv_real(p.cost_et_pa),
            csv_real(p.loss_prob_pa)
        )
        .unwrap();
    }
    out
}

#[derive(Serialize)]
struct CurvesJson<'a> {
    seed: u64,
    config_digest: &'a str,
    columns: [&'static str; 5],
    points: Vec<JsonPoint>,
}

#[derive(Serialize)]
struct JsonPoint {
    n: u32,
    rho: f64,
    cost_tt_tdma: Option<f64>,
    /// `None` where every packet is lost.
    cost_et_pa: Option<f64>,
    p_pa: f64,
}

pub fn curves_json(points: &[LoadPoint], seed: u64, config_digest: &str) -> String {
    let doc = CurvesJson {
        seed,
        config_digest,
        columns: ["n", "rho", "cost_tt_tdma", "cost_et_pa", "p_pa"],
        points: points
            .iter()
            .map(|p| JsonPoint {
                n: p.num_agents,
                rho: p.rho,
                cost_tt_tdma: p.cost_tt_tdma,
                cost_et_pa: p.cost_et_pa.is_finite().then_some(p.cost_et_pa),
                p_pa: p.loss_prob_pa,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("curves serialize");
    text.push('\n');
    text
}

/// Writes through a sibling temporary file so readers never see a partial
/// artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(n: u32) -> EtcConstants {
        EtcConstants {
            num_agents: n,
            mean_exit_time: 1.0 / n as f64,
            mean_exit_se: 0.01,
            base_cost: 0.5,
            base_cost_se: 0.01,
            replications: 100,
            step: 1e-3,
            seed: 1,
        }
    }

    fn provenance() -> Provenance {
        Provenance {
            tool_version: "0.1.0".into(),
            timestamp: None,
            config_digest: "abc".into(),
            seed: 1,
        }
    }

    #[test]
    fn round_trip_and_dedup() {
        let file = ConstantsFile::new(provenance(), [entry(3), entry(2), entry(3)]);
        assert_eq!(file.entries.len(), 2);
        assert_eq!(file.entries[0].num_agents, 2);
        let back = ConstantsFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn rejects_unknown_version() {
        let mut value: serde_json::Value =
            serde_json::from_str(&ConstantsFile::new(provenance(), [entry(2)]).to_json()).unwrap();
        value["format_version"] = 2.into();
        let err = ConstantsFile::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("format_version 2"));
    }

    #[test]
    fn rejects_duplicate_entries() {
        let mut file = ConstantsFile::new(provenance(), [entry(2)]);
        file.entries.push(entry(2));
        let text = serde_json::to_string(&file).unwrap();
        assert!(ConstantsFile::from_json(&text).is_err());
    }

    #[test]
    fn csv_layout() {
        let pts = [
            LoadPoint {
                rho: 1.0,
                num_agents: 2,
                cost_tt_tdma: Some(1.5),
                cost_et_pa: 9.0,
                loss_prob_pa: 0.8,
            },
            LoadPoint {
                rho: 2.0,
                num_agents: 2,
                cost_tt_tdma: None,
                cost_et_pa: f64::INFINITY,
                loss_prob_pa: 1.0,
            },
        ];
        let csv = curves_csv(&pts, 7, "d");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# seed=7 config_digest=d");
        assert_eq!(lines[1], CURVE_HEADER);
        assert_eq!(lines[2], "2,1,1.5,9,0.8");
        assert_eq!(lines[3], "2,2,,inf,1");
        let json: serde_json::Value = serde_json::from_str(&curves_json(&pts, 7, "d")).unwrap();
        assert!(json["points"][1]["cost_et_pa"].is_null());
    }
}
