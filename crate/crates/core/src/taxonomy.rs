//! Is-a taxonomy over class lemmas with Leacock–Chodorow similarity.
//!
//! File format, one record per line, tab separated:
//!
//! ```text
//! synset_id <TAB> parent_id_csv <TAB> lemma_csv
//! ```
//!
//! Roots leave the parent field empty. Lines starting with `#` are comments.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One parsed taxonomy line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynsetRecord {
    pub id: String,
    pub parents: Vec<String>,
    pub lemmas: Vec<String>,
}

impl SynsetRecord {
    pub fn new(id: &str, parents: &[&str], lemmas: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Labels of a class vocabulary mapped onto synsets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VocabResolution {
    /// Synset indices per vocabulary entry; empty when unresolvable.
    pub synsets: Vec<Vec<usize>>,
    pub unresolved: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Taxonomy {
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    node_lemmas: Vec<Vec<String>>,
    /// Lemmas in first-appearance order; the position is the label id.
    lemmas: Vec<String>,
    lemma_index: HashMap<String, Vec<usize>>,
    /// Per node: (ancestor, upward edge count) sorted by ancestor, self included.
    ancestors: Vec<Vec<(usize, usize)>>,
    root_distance: Vec<usize>,
    depth: usize,
}

impl Taxonomy {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: n + 1,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let id = fields[0].trim();
            if id.is_empty() {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: n + 1,
                    msg: "empty synset id".into(),
                });
            }
            records.push(SynsetRecord {
                id: id.to_string(),
                parents: split_csv(fields[1]),
                lemmas: split_csv(fields[2]),
            });
        }
        Self::from_records(records)
    }

    pub fn from_records(records: Vec<SynsetRecord>) -> Result<Self> {
        let mut ids = Vec::with_capacity(records.len());
        let mut by_id = HashMap::with_capacity(records.len());
        for r in &records {
            if by_id.insert(r.id.clone(), ids.len()).is_some() {
                return Err(Error::InvalidTaxonomy(format!("duplicate synset id `{}`", r.id)));
            }
            ids.push(r.id.clone());
        }
        let n = ids.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut node_lemmas = Vec::with_capacity(n);
        let mut lemmas = Vec::new();
        let mut lemma_index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, r) in records.into_iter().enumerate() {
            for p in &r.parents {
                let pi = *by_id.get(p).ok_or_else(|| {
                    Error::InvalidTaxonomy(format!("`{}` names unknown parent `{p}`", r.id))
                })?;
                if pi == i {
                    return Err(Error::InvalidTaxonomy(format!("`{}` is its own parent", r.id)));
                }
                if !parents[i].contains(&pi) {
                    parents[i].push(pi);
                    children[pi].push(i);
                }
            }
            for l in &r.lemmas {
                let entry = lemma_index.entry(l.clone()).or_default();
                if entry.is_empty() {
                    lemmas.push(l.clone());
                }
                if !entry.contains(&i) {
                    entry.push(i);
                }
            }
            node_lemmas.push(r.lemmas);
        }

        // Kahn's algorithm from the roots down; anything left over sits on a cycle.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &children[u] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(Error::InvalidTaxonomy(format!(
                "hypernym cycle through `{}`",
                ids[stuck]
            )));
        }

        // Shortest root distance: multi-source BFS downward.
        let mut root_distance = vec![usize::MAX; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for i in 0..n {
            if parents[i].is_empty() {
                root_distance[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &c in &children[u] {
                if root_distance[c] == usize::MAX {
                    root_distance[c] = root_distance[u] + 1;
                    queue.push_back(c);
                }
            }
        }
        let depth = root_distance.iter().copied().max().unwrap_or(0).max(1);

        let ancestors = (0..n).map(|i| upward_distances(&parents, i)).collect();

        Ok(Self {
            ids,
            by_id,
            parents,
            node_lemmas,
            lemmas,
            lemma_index,
            ancestors,
            root_distance,
            depth,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Taxonomy depth `D`: the largest shortest root-to-node edge count
    /// (at least 1).
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSynset(id.to_string()))
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn parents(&self, index: usize) -> &[usize] {
        &self.parents[index]
    }

    pub fn root_distance(&self, index: usize) -> usize {
        self.root_distance[index]
    }

    /// All lemmas, in label-id order.
    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    pub fn synsets_for(&self, label: &str) -> &[usize] {
        self.lemma_index.get(label).map_or(&[], Vec::as_slice)
    }

    /// Number of is-a edges on the shortest path joining `a` and `b` through a
    /// common ancestor.
    pub fn shortest_path_edges(&self, a: &str, b: &str) -> Result<usize> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        self.path_edges_by_index(ia, ib)
            .ok_or_else(|| Error::NoPath(a.to_string(), b.to_string()))
    }

    pub fn path_edges_by_index(&self, a: usize, b: usize) -> Option<usize> {
        if a == b {
            return Some(0);
        }
        let (xa, xb) = (&self.ancestors[a], &self.ancestors[b]);
        let (mut i, mut j) = (0, 0);
        let mut best: Option<usize> = None;
        while i < xa.len() && j < xb.len() {
            match xa[i].0.cmp(&xb[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let d = xa[i].1 + xb[j].1;
                    best = Some(best.map_or(d, |cur| cur.min(d)));
                    i += 1;
                    j += 1;
                }
            }
        }
        best
    }

    /// `-ln((p + 1) / (2 D))` for path length `p` in edges.
    pub fn lch_from_edges(&self, edges: usize) -> f64 {
        lch_score(edges, self.depth)
    }

    pub fn lch_similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.lch_from_edges(self.shortest_path_edges(a, b)?))
    }

    pub fn lch_by_index(&self, a: usize, b: usize) -> Option<f64> {
        self.path_edges_by_index(a, b).map(|p| self.lch_from_edges(p))
    }

    /// Maximum LCH over all synset pairs of two labels; `None` when either label
    /// is unresolvable or no pair is connected.
    pub fn label_similarity(&self, a: &str, b: &str) -> Option<f64> {
        max_pair_score(self, self.synsets_for(a), self.synsets_for(b))
    }

    pub fn resolve_vocabulary<S: AsRef<str>>(&self, vocab: &[S]) -> VocabResolution {
        let mut out = VocabResolution::default();
        for label in vocab {
            let s = self.synsets_for(label.as_ref()).to_vec();
            if s.is_empty() {
                out.unresolved.push(label.as_ref().to_string());
            }
            out.synsets.push(s);
        }
        out
    }

    /// Vocabulary entries scoring at least `threshold` against `label`, best
    /// first, ties by ascending vocabulary id. The query label itself is
    /// excluded. Returns `(vocabulary id, score)` pairs.
    pub fn similar_classes<S: AsRef<str>>(
        &self,
        label: &str,
        vocab: &[S],
        threshold: f64,
    ) -> Result<Vec<(usize, f64)>> {
        check_threshold(threshold)?;
        let query = self.synsets_for(label);
        if query.is_empty() {
            log::warn!("label `{label}` has no synset in the taxonomy; no similar classes");
            return Ok(Vec::new());
        }
        let mut hits: Vec<(usize, f64)> = vocab
            .iter()
            .enumerate()
            .filter(|(_, b)| b.as_ref() != label)
            .filter_map(|(id, b)| {
                max_pair_score(self, query, self.synsets_for(b.as_ref()))
                    .filter(|&s| s >= threshold)
                    .map(|s| (id, s))
            })
            .collect();
        sort_hits(&mut hits);
        Ok(hits)
    }

    /// [`Taxonomy::similar_classes`] with labels instead of ids.
    pub fn similar_labels<S: AsRef<str>>(
        &self,
        label: &str,
        vocab: &[S],
        threshold: f64,
    ) -> Result<Vec<(String, f64)>> {
        Ok(self
            .similar_classes(label, vocab, threshold)?
            .into_iter()
            .map(|(id, s)| (vocab[id].as_ref().to_string(), s))
            .collect())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# synset_id\tparent_ids\tlemmas\n");
        for i in 0..self.len() {
            let parents: Vec<&str> = self.parents[i].iter().map(|&p| self.ids[p].as_str()).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.ids[i],
                parents.join(","),
                self.node_lemmas[i].join(",")
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

pub fn lch_score(edges: usize, depth: usize) -> f64 {
    -(((edges + 1) as f64) / (2.0 * depth as f64)).ln()
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("similarity threshold must be > 0, got {threshold}")))
    }
}

/// Descending score, then ascending id.
pub(crate) fn sort_hits(hits: &mut [(usize, f64)]) {
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

fn max_pair_score(tax: &Taxonomy, a: &[usize], b: &[usize]) -> Option<f64> {
    let mut best: Option<usize> = None;
    for &x in a {
        for &y in b {
            if let Some(p) = tax.path_edges_by_index(x, y) {
                best = Some(best.map_or(p, |cur| cur.min(p)));
            }
        }
    }
    best.map(|p| tax.lch_from_edges(p))
}

fn upward_distances(parents: &[Vec<usize>], start: usize) -> Vec<(usize, usize)> {
    let mut dist: HashMap<usize, usize> = HashMap::new();
    dist.insert(start, 0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for &p in &parents[u] {
            if !dist.contains_key(&p) {
                dist.insert(p, d + 1);
                queue.push_back(p);
            }
        }
    }
    let mut out: Vec<(usize, usize)> = dist.into_iter().collect();
    out.sort_unstable();
    out
}

fn split_csv(field: &str) -> Vec<String> {
    field
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Taxonomy {
        Taxonomy::parse(
            "# toy\nroot\t\tentity\nfood\troot\tfood\ndessert\tfood\tdessert\n\
             cake\tdessert\tcake\ncookie\tdessert\tcookie,biscuit\n",
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn path_examples() {
        let t = toy();
        assert_eq!(t.shortest_path_edges("cake", "cake").unwrap(), 0);
        assert_eq!(t.shortest_path_edges("cake", "cookie").unwrap(), 2);
        assert_eq!(t.shortest_path_edges("cake", "food").unwrap(), 2);
        assert!(matches!(
            t.shortest_path_edges("cake", "pie"),
            Err(Error::UnknownSynset(id)) if id == "pie"
        ));
    }

    #[test]
    fn depth_counts_edges_from_root() {
        assert_eq!(toy().depth(), 3);
    }

    #[test]
    fn lch_examples() {
        let t = toy();
        let same = t.lch_similarity("cake", "cake").unwrap();
        assert!((same - (6.0f64).ln()).abs() < 1e-12);
        assert!((same - 1.7918).abs() < 1e-4);
        let sib = t.lch_similarity("cake", "cookie").unwrap();
        assert!((sib - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn wordnet_scale_threshold() {
        assert!(lch_score(2, 19) >= 2.26);
        assert!((lch_score(2, 19) - 2.539).abs() < 1e-3);
        assert!(lch_score(3, 19) < 2.26);
        assert!((lch_score(3, 19) - 2.251).abs() < 1e-3);
        assert!((lch_score(0, 19) - 3.638).abs() < 1e-3);
    }

    #[test]
    fn similar_classes_on_toy() {
        let t = toy();
        let vocab = ["cake", "cookie"];
        let hits = t.similar_labels("cake", &vocab, 2f64.ln()).unwrap();
        let labels: Vec<&str> = hits.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, vec!["cookie"]);
        assert!(t.similar_classes("cake", &vocab, 1e9).unwrap().is_empty());
        assert!(t.similar_classes("cake", &vocab, 0.0).is_err());
    }

    #[test]
    fn similar_classes_sorts_by_score_then_id() {
        let t = toy();
        let vocab = ["food", "biscuit", "dessert", "cake", "cookie"];
        let hits = t.similar_classes("cake", &vocab, 0.1).unwrap();
        // dessert is 1 edge away; food, biscuit, cookie tie at 2 edges.
        let ids: Vec<usize> = hits.iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![2, 0, 1, 4]);
    }

    #[test]
    fn unresolvable_label_yields_nothing() {
        let t = toy();
        assert!(t.similar_classes("spaceship", &["cake"], 0.1).unwrap().is_empty());
        let res = t.resolve_vocabulary(&["cake", "spaceship"]);
        assert_eq!(res.unresolved, vec!["spaceship".to_string()]);
        assert_eq!(res.synsets[0].len(), 1);
    }

    #[test]
    fn disconnected_components_have_no_path() {
        let t = Taxonomy::parse("a\t\tx\nb\t\ty\n", "two-roots").unwrap();
        assert!(matches!(t.lch_similarity("a", "b"), Err(Error::NoPath(..))));
        assert_eq!(t.label_similarity("x", "y"), None);
    }

    #[test]
    fn dag_uses_nearest_common_ancestor() {
        // d has two parents; the short route goes through b.
        let t = Taxonomy::parse(
            "r\t\tr\na\tr\ta\nb\tr\tb\nc\ta\tc\nd\tc,b\td\ne\tb\te\n",
            "dag",
        )
        .unwrap();
        assert_eq!(t.shortest_path_edges("d", "e").unwrap(), 2);
        assert_eq!(t.shortest_path_edges("d", "a").unwrap(), 2);
    }

    #[test]
    fn cycles_and_bad_parents_are_rejected() {
        assert!(Taxonomy::parse("a\tb\tx\nb\ta\ty\n", "cyc").is_err());
        assert!(Taxonomy::parse("a\tzzz\tx\n", "dangling").is_err());
        assert!(Taxonomy::parse("a\t\tx\na\t\ty\n", "dup").is_err());
        assert!(matches!(
            Taxonomy::parse("a\tx\n", "short"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let t = toy();
        let again = Taxonomy::parse(&t.to_tsv(), "rt").unwrap();
        assert_eq!(again.lemmas(), t.lemmas());
        assert_eq!(again.depth(), t.depth());
        assert_eq!(again.shortest_path_edges("cake", "cookie").unwrap(), 2);
    }
}
