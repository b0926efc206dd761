//! Simplicial meshes in one and two dimensions with tagged boundary facets.
//!
//! JSON form:
//!
//! ```json
//! {"dim": 1, "nodes": [[0.0], [0.5], [1.0]], "elements": [[0, 1], [1, 2]],
//!  "boundary": [{"nodes": [0], "tag": "gamma1"}, {"nodes": [2], "tag": "gamma3"}]}
//! ```
//!
//! Every boundary facet (a node in 1-D, an edge in 2-D) must be tagged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Gamma1,
    Gamma2,
    Gamma3,
}

impl BoundaryTag {
    /// Precedence at nodes shared by two parts: Dirichlet first, then contact.
    fn rank(self) -> u8 {
        match self {
            BoundaryTag::Gamma1 => 0,
            BoundaryTag::Gamma3 => 1,
            BoundaryTag::Gamma2 => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub nodes: Vec<usize>,
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshRepr", into = "MeshRepr")]
pub struct Mesh {
    dim: usize,
    /// Coordinates padded to two components.
    nodes: Vec<[f64; 2]>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<Facet>,
    node_tags: Vec<Option<BoundaryTag>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshRepr {
    dim: usize,
    nodes: Vec<Vec<f64>>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<Facet>,
}

impl TryFrom<MeshRepr> for Mesh {
    type Error = Error;

    fn try_from(r: MeshRepr) -> Result<Self> {
        let mut nodes = Vec::with_capacity(r.nodes.len());
        for (k, c) in r.nodes.iter().enumerate() {
            if c.len() != r.dim {
                return Err(Error::Mesh(format!("node {k} has {} coordinates, expected {}", c.len(), r.dim)));
            }
            nodes.push([c[0], c.get(1).copied().unwrap_or(0.0)]);
        }
        Mesh::new(r.dim, nodes, r.elements, r.boundary)
    }
}

impl From<Mesh> for MeshRepr {
    fn from(m: Mesh) -> Self {
        MeshRepr {
            dim: m.dim,
            nodes: m.nodes.iter().map(|c| c[..m.dim].to_vec()).collect(),
            elements: m.elements,
            boundary: m.boundary,
        }
    }
}

/// Which tag each side of a rectangle carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideTags {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl Mesh {
    pub fn new(dim: usize, nodes: Vec<[f64; 2]>, elements: Vec<Vec<usize>>, boundary: Vec<Facet>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Mesh(format!("dimension {dim} not supported")));
        }
        let nn = nodes.len();
        if nodes.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        for (e, el) in elements.iter().enumerate() {
            if el.len() != dim + 1 {
                return Err(Error::Mesh(format!("element {e} needs {} nodes", dim + 1)));
            }
            if let Some(&bad) = el.iter().find(|&&i| i >= nn) {
                return Err(Error::Mesh(format!("element {e} references missing node {bad}")));
            }
        }
        if elements.is_empty() {
            return Err(Error::Mesh("mesh has no elements".into()));
        }
        let mut mesh = Self {
            dim,
            nodes,
            elements,
            boundary,
            node_tags: vec![None; nn],
        };
        for (e, _) in mesh.elements.iter().enumerate() {
            if mesh.measure(e) <= 0.0 {
                return Err(Error::Mesh(format!("element {e} is degenerate or inverted")));
            }
        }
        let tagged: BTreeMap<Vec<usize>, BoundaryTag> = mesh
            .boundary
            .iter()
            .map(|f| {
                if f.nodes.len() != dim || f.nodes.iter().any(|&i| i >= nn) {
                    return Err(Error::Mesh(format!("bad boundary facet {:?}", f.nodes)));
                }
                let mut key = f.nodes.clone();
                key.sort_unstable();
                Ok((key, f.tag))
            })
            .collect::<Result<_>>()?;
        for facet in mesh.boundary_facets() {
            if !tagged.contains_key(&facet) {
                return Err(Error::UntaggedBoundary(facet[0]));
            }
        }
        for f in &mesh.boundary {
            for &i in &f.nodes {
                let t = &mut mesh.node_tags[i];
                if t.is_none_or(|old| f.tag.rank() < old.rank()) {
                    *t = Some(f.tag);
                }
            }
        }
        if !mesh.node_tags.contains(&Some(BoundaryTag::Gamma1)) {
            return Err(Error::EmptyGamma1);
        }
        Ok(mesh)
    }

    /// Uniform partition of `[0, length]` into `nx` elements.
    pub fn interval(length: f64, nx: usize, left: BoundaryTag, right: BoundaryTag) -> Result<Self> {
        if nx == 0 || !(length > 0.0) {
            return Err(Error::Mesh("interval needs nx ≥ 1 and positive length".into()));
        }
        let nodes = (0..=nx).map(|i| [length * i as f64 / nx as f64, 0.0]).collect();
        let elements = (0..nx).map(|i| vec![i, i + 1]).collect();
        let boundary = vec![
            Facet {
                nodes: vec![0],
                tag: left,
            },
            Facet {
                nodes: vec![nx],
                tag: right,
            },
        ];
        Self::new(1, nodes, elements, boundary)
    }

    /// `[0, lx] × [0, ly]` split into `nx × ny` cells, two triangles each.
    /// Node `(i, j)` has index `j·(nx + 1) + i`.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize, sides: SideTags) -> Result<Self> {
        if nx == 0 || ny == 0 || !(lx > 0.0 && ly > 0.0) {
            return Err(Error::Mesh("rectangle needs nx, ny ≥ 1 and positive sides".into()));
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                elements.push(vec![a, b, c]);
                elements.push(vec![a, c, d]);
            }
        }
        let mut boundary = Vec::new();
        for i in 0..nx {
            boundary.push(Facet {
                nodes: vec![id(i, 0), id(i + 1, 0)],
                tag: sides.bottom,
            });
            boundary.push(Facet {
                nodes: vec![id(i, ny), id(i + 1, ny)],
                tag: sides.top,
            });
        }
        for j in 0..ny {
            boundary.push(Facet {
                nodes: vec![id(0, j), id(0, j + 1)],
                tag: sides.left,
            });
            boundary.push(Facet {
                nodes: vec![id(nx, j), id(nx, j + 1)],
                tag: sides.right,
            });
        }
        Self::new(2, nodes, elements, boundary)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Mesh::try_from(serde_json::from_str::<MeshRepr>(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn boundary(&self) -> &[Facet] {
        &self.boundary
    }

    pub fn node_tag(&self, i: usize) -> Option<BoundaryTag> {
        self.node_tags[i]
    }

    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.node_tags[i] == Some(tag))
            .collect()
    }

    /// Length or area of element `e`.
    pub fn measure(&self, e: usize) -> f64 {
        let el = &self.elements[e];
        let p = |k: usize| self.nodes[el[k]];
        match self.dim {
            1 => p(1)[0] - p(0)[0],
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    /// Length of a facet (1 for a point facet).
    pub fn facet_measure(&self, f: &Facet) -> f64 {
        match f.nodes.as_slice() {
            [_] => 1.0,
            [a, b] => {
                let (p, q) = (self.nodes[*a], self.nodes[*b]);
                ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
            }
            _ => 0.0,
        }
    }

    /// Facets that belong to exactly one element, as sorted node lists.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        let mut count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for el in &self.elements {
            for skip in 0..el.len() {
                let mut f: Vec<usize> = el
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                *count.entry(f).or_default() += 1;
            }
        }
        count.into_iter().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect()
    }

    /// Lumped facet mass per node over facets carrying `tag`: each facet
    /// shares its measure equally among its nodes.
    pub fn lumped_boundary_mass(&self, tag: BoundaryTag) -> Vec<f64> {
        let mut w = vec![0.0; self.num_nodes()];
        for f in self.boundary.iter().filter(|f| f.tag == tag) {
            let share = self.facet_measure(f) / f.nodes.len() as f64;
            for &i in &f.nodes {
                w[i] += share;
            }
        }
        w
    }

    /// Gradients of the P1 basis functions on element `e` (constant per element).
    pub fn basis_gradients(&self, e: usize) -> Vec<[f64; 2]> {
        let el = &self.elements[e];
        let p = |k: usize| self.nodes[el[k]];
        match self.dim {
            1 => {
                let h = p(1)[0] - p(0)[0];
                vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]]
            }
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                let det = 2.0 * self.measure(e);
                vec![
                    [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                    [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                    [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
                ]
            }
        }
    }

    /// Value at `x` of the P1 function with nodal values `values`, or `None`
    /// outside the mesh.
    pub fn evaluate(&self, values: &[f64], x: [f64; 2]) -> Option<f64> {
        const EPS: f64 = 1e-12;
        for (e, el) in self.elements.iter().enumerate() {
            let p = |k: usize| self.nodes[el[k]];
            let bary: Vec<f64> = match self.dim {
                1 => {
                    let t = (x[0] - p(0)[0]) / self.measure(e);
                    vec![1.0 - t, t]
                }
                _ => {
                    let (a, b, c) = (p(0), p(1), p(2));
                    let det = 2.0 * self.measure(e);
                    let l1 = ((b[0] - x[0]) * (c[1] - x[1]) - (c[0] - x[0]) * (b[1] - x[1])) / det;
                    let l2 = ((c[0] - x[0]) * (a[1] - x[1]) - (a[0] - x[0]) * (c[1] - x[1])) / det;
                    vec![l1, l2, 1.0 - l1 - l2]
                }
            };
            if bary.iter().all(|&l| l >= -EPS) {
                return Some(bary.iter().zip(el).map(|(l, &i)| l * values[i]).sum());
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contact_sides() -> SideTags {
        SideTags {
            left: BoundaryTag::Gamma1,
            right: BoundaryTag::Gamma2,
            bottom: BoundaryTag::Gamma3,
            top: BoundaryTag::Gamma2,
        }
    }

    #[test]
    fn rectangle_counts_and_corner_precedence() {
        let m = Mesh::rectangle(2.0, 1.0, 4, 2, contact_sides()).unwrap();
        assert_eq!(m.num_nodes(), 15);
        assert_eq!(m.elements().len(), 16);
        assert_eq!(m.node_tag(0), Some(BoundaryTag::Gamma1));
        assert_eq!(m.node_tag(4), Some(BoundaryTag::Gamma3));
        assert_eq!(m.nodes_with_tag(BoundaryTag::Gamma1).len(), 3);
        assert_eq!(m.node_tag(7), None);
        let total: f64 = (0..16).map(|e| m.measure(e)).sum();
        assert!((total - 2.0).abs() < 1e-14);
        let w = m.lumped_boundary_mass(BoundaryTag::Gamma3);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let m = Mesh::interval(1.0, 2, BoundaryTag::Gamma1, BoundaryTag::Gamma3).unwrap();
        let back = Mesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let untagged = r#"{"dim":1,"nodes":[[0.0],[1.0]],"elements":[[0,1]],"boundary":[{"nodes":[0],"tag":"gamma1"}]}"#;
        assert!(matches!(Mesh::from_json(untagged), Err(Error::UntaggedBoundary(1))));
        let no_g1 = r#"{"dim":1,"nodes":[[0.0],[1.0]],"elements":[[0,1]],"boundary":[{"nodes":[0],"tag":"gamma2"},{"nodes":[1],"tag":"gamma3"}]}"#;
        assert!(matches!(Mesh::from_json(no_g1), Err(Error::EmptyGamma1)));
    }

    #[test]
    fn gradients_reproduce_linear_functions() {
        let m = Mesh::rectangle(1.0, 1.0, 3, 2, contact_sides()).unwrap();
        let f: Vec<f64> = m.nodes().iter().map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0).collect();
        for e in 0..m.elements().len() {
            let g = m.basis_gradients(e);
            let el = &m.elements()[e];
            let gx: f64 = el.iter().zip(&g).map(|(&i, d)| f[i] * d[0]).sum();
            let gy: f64 = el.iter().zip(&g).map(|(&i, d)| f[i] * d[1]).sum();
            assert!((gx - 2.0).abs() < 1e-12 && (gy + 3.0).abs() < 1e-12);
        }
        let v = m.evaluate(&f, [0.4, 0.7]).unwrap();
        assert!((v - (0.8 - 2.1 + 1.0)).abs() < 1e-12);
    }
}
