//! Networks and per-vertex activation models.
//!
//! Edge weights have no standalone meaning here: every parameter lives in the
//! model attached to the child vertex, indexed by the child's parent order.
//! Parent order is the order in which a vertex's incoming edges appear in the
//! network file, and it fixes the bit positions of parent states.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::lattice::{LatticeVector, MAX_PARENTS};

/// Slack allowed when checking that weights sum to at most one.
pub const WEIGHT_SUM_SLACK: f64 = 1e-12;

/// Activation probabilities of one vertex under every parent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivationTable(LatticeVector);

impl ActivationTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = LatticeVector::new(values)?;
        Self::from_lattice(v)
    }

    pub fn from_lattice(v: LatticeVector) -> Result<Self> {
        for (s, &x) in v.as_slice().iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Probability { what: format!("table entry {s}"), value: x });
            }
        }
        Ok(ActivationTable(v))
    }

    /// Number of parents.
    pub fn k(&self) -> usize {
        self.0.parent_count()
    }

    pub fn values(&self) -> &LatticeVector {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    /// Activation probability under parent state `s`.
    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    /// Nonzero activation probability with no active parent.
    pub fn is_spontaneous(&self) -> bool {
        self.0[0] > 0.0
    }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    for (i, &x) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Probability { what: format!("parent {i}"), value: x });
        }
    }
    if p.len() > MAX_PARENTS {
        return Err(Error::ParentCount(p.len(), MAX_PARENTS));
    }
    Ok(())
}

fn check_weights(w: &[f64]) -> Result<f64> {
    for (i, &x) in w.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::NegativeWeight { what: format!("parent {i}"), value: x });
        }
    }
    if w.len() > MAX_PARENTS {
        return Err(Error::ParentCount(w.len(), MAX_PARENTS));
    }
    let total: f64 = w.iter().sum();
    if total > 1.0 + WEIGHT_SUM_SLACK {
        return Err(Error::WeightsExceedOne(total));
    }
    Ok(total)
}

/// Independent cascade: `a[s] = 1 - prod_{i in s} (1 - p_i)`.
pub fn ic_table(p: &[f64]) -> Result<ActivationTable> {
    check_probabilities(p)?;
    let n = 1usize << p.len();
    // miss[s] = prod_{i in s} (1 - p_i), built by doubling.
    let mut miss = Vec::with_capacity(n);
    miss.push(1.0);
    for &pi in p {
        let len = miss.len();
        for s in 0..len {
            miss.push(miss[s] * (1.0 - pi));
        }
    }
    ActivationTable::new(miss.into_iter().map(|m| 1.0 - m).collect())
}

/// Linear threshold: `a[s] = sum_{i in s} w_i`.
pub fn lt_table(w: &[f64]) -> Result<ActivationTable> {
    check_weights(w)?;
    let mut a = Vec::with_capacity(1 << w.len());
    a.push(0.0);
    for &wi in w {
        let len = a.len();
        for s in 0..len {
            a.push((a[s] + wi).min(1.0));
        }
    }
    ActivationTable::new(a)
}

/// Coverage coefficients of the independent cascade: the product measure over
/// independent live edges, `b[c] = prod_i p_i^[i in c] (1 - p_i)^[i not in c]`.
pub fn ic_coefficients(p: &[f64]) -> Result<LatticeVector> {
    check_probabilities(p)?;
    let mut b = Vec::with_capacity(1 << p.len());
    b.push(1.0);
    for &pi in p {
        let len = b.len();
        for c in 0..len {
            b.push(b[c] * pi);
            b[c] *= 1.0 - pi;
        }
    }
    LatticeVector::new(b)
}

/// Coverage coefficients of the linear threshold model: mass `w_i` on each
/// singleton pattern and the remainder on the empty pattern.
pub fn lt_coefficients(w: &[f64]) -> Result<LatticeVector> {
    let total = check_weights(w)?;
    let mut b = LatticeVector::zeros(w.len());
    b[0] = (1.0 - total).max(0.0);
    for (i, &wi) in w.iter().enumerate() {
        b[1 << i] = wi;
    }
    Ok(b)
}

/// Parameterized model attached to one vertex. Parameter vectors follow the
/// vertex's parent order.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Table { a: Vec<f64>, spontaneous: bool },
    Ic { p: Vec<f64> },
    Lt { w: Vec<f64> },
    /// `w[u][n]`: weight of parent `u` for information type `n`.
    Plmmi { n_types: usize, w: Vec<Vec<f64>> },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Table { .. } => "table",
            ModelSpec::Ic { .. } => "ic",
            ModelSpec::Lt { .. } => "lt",
            ModelSpec::Plmmi { .. } => "plmmi",
        }
    }

    /// Validates the parameters against `k` parents and expands the single-type
    /// activation table. A PLMMI vertex expands to the linear table of its
    /// type-1 weights, which is its law when only one type is present.
    pub fn expand(&self, k: usize, strict_normalization: bool) -> Result<ActivationTable> {
        let arity = |n: usize| -> Result<()> {
            if n != k {
                return Err(Error::Invalid(format!("expected {k} parameters, found {n}")));
            }
            Ok(())
        };
        match self {
            ModelSpec::Table { a, spontaneous } => {
                if a.len() != 1 << k {
                    return Err(Error::LengthMismatch { k, expected: 1 << k, found: a.len() });
                }
                let t = ActivationTable::new(a.clone())?;
                if t.is_spontaneous() && !spontaneous {
                    return Err(Error::Invalid(
                        "table has a[0] > 0; set \"spontaneous\": true to allow it".into(),
                    ));
                }
                Ok(t)
            }
            ModelSpec::Ic { p } => {
                arity(p.len())?;
                ic_table(p)
            }
            ModelSpec::Lt { w } => {
                arity(w.len())?;
                lt_table(w)
            }
            ModelSpec::Plmmi { n_types, w } => {
                arity(w.len())?;
                if *n_types == 0 {
                    return Err(Error::Invalid("n_types must be at least 1".into()));
                }
                let mut flat = Vec::with_capacity(k * n_types);
                for row in w {
                    if row.len() != *n_types {
                        return Err(Error::Invalid(format!(
                            "expected {n_types} weights per parent, found {}",
                            row.len()
                        )));
                    }
                    flat.extend_from_slice(row);
                }
                let total = check_weights_flat(&flat)?;
                if strict_normalization && k > 0 && (total - 1.0).abs() > 1e-9 {
                    return Err(Error::WeightsNotNormalized(total));
                }
                lt_table(&w.iter().map(|row| row[0]).collect::<Vec<_>>())
            }
        }
    }
}

fn check_weights_flat(w: &[f64]) -> Result<f64> {
    for (i, &x) in w.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::NegativeWeight { what: format!("weight {i}"), value: x });
        }
    }
    let total: f64 = w.iter().sum();
    if total > 1.0 + WEIGHT_SUM_SLACK {
        return Err(Error::WeightsExceedOne(total));
    }
    Ok(total)
}

/// Loader switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Require PLMMI weights to sum to exactly one at every vertex with parents.
    pub strict_normalization: bool,
}

/// Directed acyclic network with one activation model per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    specs: Vec<ModelSpec>,
    tables: Vec<ActivationTable>,
    topo: Vec<usize>,
}

impl Network {
    /// Validates and assembles a network. `parents[v]` lists parent indices in
    /// bit order; `specs[v]` parameterizes vertex `v` over those parents.
    pub fn new(
        names: Vec<String>,
        parents: Vec<Vec<usize>>,
        specs: Vec<ModelSpec>,
        opts: LoadOptions,
    ) -> Result<Self> {
        let n = names.len();
        if parents.len() != n || specs.len() != n {
            return Err(Error::Invalid("names, parents and specs differ in length".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::DuplicateVertex(name.clone()));
            }
        }
        for (v, ps) in parents.iter().enumerate() {
            if ps.len() > MAX_PARENTS {
                return Err(Error::ParentCount(ps.len(), MAX_PARENTS));
            }
            for (j, &u) in ps.iter().enumerate() {
                if u >= n {
                    return Err(Error::UnknownVertex(format!("#{u}")));
                }
                if ps[..j].contains(&u) {
                    return Err(Error::DuplicateEdge(names[u].clone(), names[v].clone()));
                }
            }
        }
        let topo = topological_order(&names, &parents)?;
        let mut tables = Vec::with_capacity(n);
        for (v, spec) in specs.iter().enumerate() {
            let table = spec
                .expand(parents[v].len(), opts.strict_normalization)
                .map_err(|e| match e {
                    Error::WeightsExceedOne(_) | Error::NegativeWeight { .. } | Error::Probability { .. } => e,
                    other => Error::InvalidModel { vertex: names[v].clone(), reason: other.to_string() },
                })?;
            if table.is_spontaneous() {
                warn!(
                    "vertex {:?} activates with no active parent (a[0] = {}); it will certify infeasible",
                    names[v],
                    table.get(0)
                );
            }
            tables.push(table);
        }
        Ok(Network { names, index, parents, specs, tables, topo })
    }

    /// Network whose vertices all carry explicit tables.
    pub fn from_tables(
        names: Vec<String>,
        parents: Vec<Vec<usize>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let specs = tables
            .into_iter()
            .map(|a| {
                let spontaneous = a.first().is_some_and(|&x| x > 0.0);
                ModelSpec::Table { a, spontaneous }
            })
            .collect();
        Network::new(names, parents, specs, LoadOptions::default())
    }

    pub fn empty() -> Self {
        Network::new(vec![], vec![], vec![], LoadOptions::default()).expect("empty network is valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVertex(name.to_string()))
    }

    /// Resolves a list of names to a sorted, deduplicated index list.
    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut out = names
            .iter()
            .map(|n| self.index_of(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn spec(&self, v: usize) -> &ModelSpec {
        &self.specs[v]
    }

    pub fn table(&self, v: usize) -> &ActivationTable {
        &self.tables[v]
    }

    pub fn tables(&self) -> &[ActivationTable] {
        &self.tables
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Parent state of `v` given a vertex membership predicate.
    pub fn parent_state(&self, v: usize, active: impl Fn(usize) -> bool) -> usize {
        self.parents[v]
            .iter()
            .enumerate()
            .fold(0, |s, (m, &u)| if active(u) { s | 1 << m } else { s })
    }

    /// `sum_v 2^|parents(v)|`, the total number of table entries.
    pub fn table_entries(&self) -> usize {
        self.tables.iter().map(|t| t.as_slice().len()).sum()
    }

    /// Copy of this network with vertex `v`'s model replaced by an explicit table.
    pub fn with_table(&self, v: usize, table: ActivationTable) -> Result<Network> {
        if table.k() != self.parents[v].len() {
            return Err(Error::LengthMismatch {
                k: self.parents[v].len(),
                expected: 1 << self.parents[v].len(),
                found: table.as_slice().len(),
            });
        }
        let mut out = self.clone();
        out.specs[v] = ModelSpec::Table {
            a: table.as_slice().to_vec(),
            spontaneous: table.is_spontaneous(),
        };
        out.tables[v] = table;
        Ok(out)
    }

    /// Serializes to the JSON network document accepted by [`load_network`].
    pub fn to_document(&self) -> Value {
        let mut edges = Vec::new();
        for v in 0..self.vertex_count() {
            for &u in &self.parents[v] {
                edges.push(json!([self.names[u], self.names[v]]));
            }
        }
        let mut models = Map::new();
        for v in 0..self.vertex_count() {
            let by_parent = |vals: &[f64]| -> Value {
                let mut m = Map::new();
                for (&u, &x) in self.parents[v].iter().zip(vals) {
                    m.insert(self.names[u].clone(), json!(x));
                }
                Value::Object(m)
            };
            let model = match &self.specs[v] {
                ModelSpec::Table { a, spontaneous } => {
                    if *spontaneous {
                        json!({"kind": "table", "a": a, "spontaneous": true})
                    } else {
                        json!({"kind": "table", "a": a})
                    }
                }
                ModelSpec::Ic { p } => json!({"kind": "ic", "p": by_parent(p)}),
                ModelSpec::Lt { w } => json!({"kind": "lt", "w": by_parent(w)}),
                ModelSpec::Plmmi { n_types, w } => {
                    let mut m = Map::new();
                    for (&u, row) in self.parents[v].iter().zip(w) {
                        m.insert(self.names[u].clone(), json!(row));
                    }
                    json!({"kind": "plmmi", "n_types": n_types, "w": m})
                }
            };
            models.insert(self.names[v].clone(), model);
        }
        json!({"vertices": self.names, "edges": edges, "models": models})
    }
}

/// Kahn's algorithm, always releasing the lowest-index ready vertex so the
/// order is deterministic.
fn topological_order(names: &[String], parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = names.len();
    let mut children = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (v, ps) in parents.iter().enumerate() {
        indegree[v] = ps.len();
        for &u in ps {
            children[u].push(v);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        order.push(u);
        for &c in &children[u] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&v| indegree[v] > 0).expect("some vertex remains");
        return Err(Error::Cycle(names[stuck].clone()));
    }
    Ok(order)
}

#[derive(Deserialize)]
struct RawDocument {
    vertices: Vec<String>,
    #[serde(default)]
    edges: Vec<(String, String)>,
    #[serde(default)]
    models: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    #[serde(default)]
    a: Option<Vec<f64>>,
    #[serde(default)]
    p: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    w: Option<BTreeMap<String, Value>>,
    #[serde(default)]
    n_types: Option<usize>,
    #[serde(default)]
    spontaneous: bool,
}

/// Parses and validates a network document.
pub fn load_network(document: &str) -> Result<Network> {
    load_network_with(document, LoadOptions::default())
}

pub fn load_network_with(document: &str, opts: LoadOptions) -> Result<Network> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    network_from_raw(raw, opts)
}

fn network_from_raw(raw: RawDocument, opts: LoadOptions) -> Result<Network> {
    let mut index = HashMap::new();
    for (i, name) in raw.vertices.iter().enumerate() {
        if index.insert(name.as_str(), i).is_some() {
            return Err(Error::DuplicateVertex(name.clone()));
        }
    }
    let lookup = |name: &str| index.get(name).copied().ok_or_else(|| Error::UnknownVertex(name.into()));
    let mut parents = vec![Vec::new(); raw.vertices.len()];
    for (u, v) in &raw.edges {
        let (ui, vi) = (lookup(u)?, lookup(v)?);
        if ui == vi {
            return Err(Error::Cycle(u.clone()));
        }
        if parents[vi].contains(&ui) {
            return Err(Error::DuplicateEdge(u.clone(), v.clone()));
        }
        parents[vi].push(ui);
    }
    for name in raw.models.keys() {
        lookup(name)?;
    }
    let mut specs = Vec::with_capacity(raw.vertices.len());
    for (v, name) in raw.vertices.iter().enumerate() {
        let spec = match raw.models.get(name) {
            None if parents[v].is_empty() => ModelSpec::Table { a: vec![0.0], spontaneous: false },
            None => {
                return Err(Error::InvalidModel {
                    vertex: name.clone(),
                    reason: "vertex has parents but no model".into(),
                })
            }
            Some(value) => parse_model(name, value, &parents[v], &raw.vertices)?,
        };
        specs.push(spec);
    }
    Network::new(raw.vertices, parents, specs, opts)
}

fn parse_model(vertex: &str, value: &Value, parents: &[usize], names: &[String]) -> Result<ModelSpec> {
    let invalid = |reason: String| Error::InvalidModel { vertex: vertex.into(), reason };
    let kind = value.get("kind").and_then(Value::as_str).unwrap_or_default();
    if !matches!(kind, "table" | "ic" | "lt" | "plmmi") {
        return Err(Error::UnknownKind(kind.to_string()));
    }
    let raw: RawModel = serde_json::from_value(value.clone()).map_err(|e| invalid(e.to_string()))?;

    // Reorders a name-keyed parameter map into parent bit order.
    fn by_parent<T: Clone>(
        map: &BTreeMap<String, T>,
        parents: &[usize],
        names: &[String],
        invalid: &dyn Fn(String) -> Error,
    ) -> Result<Vec<T>> {
        for key in map.keys() {
            if !parents.iter().any(|&u| &names[u] == key) {
                return Err(invalid(format!("{key:?} is not a parent")));
            }
        }
        parents
            .iter()
            .map(|&u| {
                map.get(&names[u])
                    .cloned()
                    .ok_or_else(|| invalid(format!("missing parameter for parent {:?}", names[u])))
            })
            .collect()
    }

    match raw.kind.as_str() {
        "table" => {
            let a = raw.a.ok_or_else(|| invalid("table model needs \"a\"".into()))?;
            Ok(ModelSpec::Table { a, spontaneous: raw.spontaneous })
        }
        "ic" => {
            let p = raw.p.unwrap_or_default();
            Ok(ModelSpec::Ic { p: by_parent(&p, parents, names, &invalid)? })
        }
        "lt" => {
            let w = raw.w.unwrap_or_default();
            let w = by_parent(&w, parents, names, &invalid)?
                .into_iter()
                .map(|x| x.as_f64().ok_or_else(|| invalid("lt weights must be numbers".into())))
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelSpec::Lt { w })
        }
        _ => {
            let n_types = raw.n_types.ok_or_else(|| invalid("plmmi model needs \"n_types\"".into()))?;
            let w = raw.w.unwrap_or_default();
            let w = by_parent(&w, parents, names, &invalid)?
                .into_iter()
                .map(|row| {
                    serde_json::from_value::<Vec<f64>>(row)
                        .map_err(|_| invalid("plmmi weights must be arrays of numbers".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelSpec::Plmmi { n_types, w })
        }
    }
}
