//! Instance file format.
//!
//! One JSON object, one section per line, every list sorted ascending:
//! `machines`, `links`, `clusters` (machine id → leader id), `params`, optional `ground_truth`.

use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{build_instance, ClusterId, ClusterPartition, CommGraph, Instance, MachineId, ParamSet};
use crate::error::{Error, Result};

/// Generator side-channel. Kept apart from [`Instance`] so stage code cannot read it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub preset: String,
    pub seed: u64,
    /// Planted almost-cliques, each sorted.
    pub cliques: Vec<Vec<ClusterId>>,
    /// Planted non-edges inside cliques, as ordered pairs `(a, b)` with `a < b`.
    pub anti_edges: Vec<(ClusterId, ClusterId)>,
    /// Clusters planted as sparse noise.
    pub sparse: Vec<ClusterId>,
}

impl GroundTruth {
    pub fn canonicalize(&mut self) {
        for c in &mut self.cliques {
            c.sort_unstable();
        }
        self.cliques.sort();
        for e in &mut self.anti_edges {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        self.anti_edges.sort_unstable();
        self.anti_edges.dedup();
        self.sparse.sort_unstable();
    }
}

/// Loader output: the algorithm view and the verifier-only view.
#[derive(Clone, Debug)]
pub struct LoadedInstance {
    pub instance: Instance,
    pub ground_truth: Option<GroundTruth>,
}

/// Map entries in file order, so that a machine listed twice is detected.
struct Entries(Vec<(MachineId, ClusterId)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping machine ids to leader ids")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, u64>()? {
                    let m = k
                        .parse::<u64>()
                        .map_err(|_| de::Error::custom(format!("invalid machine id `{k}`")))?;
                    out.push((MachineId(m), ClusterId(v)));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    machines: Vec<u64>,
    links: Vec<[u64; 2]>,
    clusters: Entries,
    #[serde(default)]
    params: Option<ParamSet>,
    #[serde(default)]
    ground_truth: Option<GroundTruth>,
}

fn parse_error(text: &str, e: &serde_json::Error) -> Error {
    let message = e.to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .or_else(|| {
            // Locate the section whose line holds the error.
            let line = text.lines().nth(e.line().saturating_sub(1))?;
            let start = line.find('"')? + 1;
            let end = start + line[start..].find('"')?;
            Some(line[start..end].to_string())
        })
        .unwrap_or_else(|| "document".to_string());
    Error::Parse { line: e.line(), field, message }
}

pub fn load_instance(bytes: &[u8]) -> Result<LoadedInstance> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        field: "document".into(),
        message: format!("not UTF-8: {e}"),
    })?;
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    let machines: Vec<MachineId> = file.machines.into_iter().map(MachineId).collect();
    let links: Vec<(MachineId, MachineId)> =
        file.links.into_iter().map(|[a, b]| (MachineId(a), MachineId(b))).collect();
    let comm = CommGraph::new(machines, &links).map_err(validation)?;
    let partition = ClusterPartition::from_pairs(file.clusters.0).map_err(validation)?;
    let params = file.params.unwrap_or_default();
    let instance = build_instance(comm, partition, params).map_err(validation)?;
    let ground_truth = file.ground_truth.map(|mut g| {
        g.canonicalize();
        g
    });
    Ok(LoadedInstance { instance, ground_truth })
}

fn validation(e: Error) -> Error {
    match e {
        Error::Validation(_) => e,
        other => Error::Validation(other.to_string()),
    }
}

/// Canonical serialization: deterministic, sorted, one section per line.
pub fn save_instance(instance: &Instance, ground_truth: Option<&GroundTruth>) -> Vec<u8> {
    let comm = instance.comm();
    let machines: Vec<u64> = comm.machine_ids().iter().map(|m| m.0).collect();
    let links: Vec<[u64; 2]> = comm.links().iter().map(|&(a, b)| [comm.id(a).0, comm.id(b).0]).collect();
    let mut out = String::from("{\n");
    out.push_str(&format!("\"machines\":{},\n", json(&machines)));
    out.push_str(&format!("\"links\":{},\n", json(&links)));
    let clusters: Vec<String> =
        instance.partition().iter().map(|(m, c)| format!("\"{}\":{}", m.0, c.0)).collect();
    out.push_str(&format!("\"clusters\":{{{}}},\n", clusters.join(",")));
    out.push_str(&format!("\"params\":{}", json(instance.params())));
    if let Some(g) = ground_truth {
        let mut g = g.clone();
        g.canonicalize();
        out.push_str(&format!(",\n\"ground_truth\":{}", json(&g)));
    }
    out.push_str("\n}\n");
    out.into_bytes()
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "{\n\"machines\":[0,1,2],\n\"links\":[[0,1],[1,2]],\n\"clusters\":{\"0\":0,\"1\":0,\"2\":2},\n";

    fn fixture() -> String {
        format!("{FIXTURE}\"params\":{}\n}}\n", json(&ParamSet::desk()))
    }

    #[test]
    fn canonical_roundtrip() {
        let f = fixture();
        let loaded = load_instance(f.as_bytes()).unwrap();
        assert_eq!(loaded.instance.delta(), 1);
        let saved = save_instance(&loaded.instance, None);
        assert_eq!(String::from_utf8(saved).unwrap(), f);
    }

    #[test]
    fn machine_in_two_clusters() {
        let f = "{\"machines\":[0,1],\"links\":[[0,1]],\"clusters\":{\"0\":0,\"1\":1,\"1\":0}}";
        assert!(matches!(load_instance(f.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_machine_list() {
        let loaded = load_instance(b"{\"machines\":[],\"links\":[],\"clusters\":{}}").unwrap();
        assert_eq!(loaded.instance.n(), 0);
        assert_eq!(loaded.instance.delta(), 0);
    }

    #[test]
    fn parse_error_names_field() {
        let f = "{\n\"machines\":[0,1],\n\"links\":[[0,\"x\"]],\n\"clusters\":{}\n}";
        match load_instance(f.as_bytes()) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "links");
            }
            other => panic!("unexpected {other:?}"),
        }
        match load_instance(b"{\"machines\":[]}") {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "links"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ground_truth_is_separate() {
        let truth = GroundTruth { preset: "x".into(), seed: 3, sparse: vec![ClusterId(2)], ..Default::default() };
        let loaded = load_instance(fixture().as_bytes()).unwrap();
        let bytes = save_instance(&loaded.instance, Some(&truth));
        let back = load_instance(&bytes).unwrap();
        assert_eq!(back.ground_truth, Some(truth));
        assert_eq!(save_instance(&back.instance, back.ground_truth.as_ref()), bytes);
    }
}
