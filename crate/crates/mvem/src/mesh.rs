//! Polygonal mesh representation with globally oriented edges, generators
//! for the tensor-product test meshes and per-element geometry.
//!
//! Every edge carries one global unit normal shared by its (one or two)
//! incident cells. The convention is that the global normal is the outward
//! normal of the lowest-index incident cell; the orientation sign stored
//! per (cell, edge) pair relates the element-outward normal to the global
//! one. Sharing the normal (and the Gauss points, ordered along the edge
//! from its lower-index vertex to its higher-index one) is what makes the
//! normal-flux degrees of freedom single-valued across elements.

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Dirichlet,
    Neumann,
}

/// A unique mesh edge between two vertices.
#[derive(Clone, Debug)]
pub struct Edge {
    /// Vertex indices with `vertices[0] < vertices[1]`; the edge direction
    /// used for Gauss-point ordering runs from the first to the second.
    pub vertices: [usize; 2],
    /// Global unit normal, orthogonal to the edge direction.
    pub normal: Vector2<f64>,
    /// Incident cells; boundary edges have exactly one.
    pub cells: [Option<usize>; 2],
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug)]
pub struct PolygonalMesh {
    pub vertices: Vec<Point2<f64>>,
    /// Counter-clockwise vertex index loops.
    pub cells: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    /// Per cell, per local edge (following the vertex loop): the global
    /// edge index and the sign relating the element-outward normal to the
    /// global edge normal.
    pub cell_edges: Vec<Vec<(usize, f64)>>,
}

/// Per-element geometric quantities.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub cell: usize,
    pub centroid: Point2<f64>,
    /// Maximum pairwise vertex distance.
    pub diameter: f64,
    pub area: f64,
    pub edge_lengths: Vec<f64>,
    /// Element-outward unit normals, one per local edge.
    pub outward_normals: Vec<Vector2<f64>>,
    /// Signs relating outward normals to the global edge normals.
    pub sigmas: Vec<f64>,
}

impl PolygonalMesh {
    /// Builds a mesh from vertices and CCW cell loops. Edge incidence is
    /// computed, global normals oriented and boundary tags assigned from
    /// the predicate evaluated at edge midpoints.
    pub fn from_cells(
        vertices: Vec<Point2<f64>>,
        cells: Vec<Vec<usize>>,
        boundary_tag: impl Fn(&Point2<f64>) -> BoundaryTag,
    ) -> Result<Self> {
        for (c, loop_) in cells.iter().enumerate() {
            if loop_.len() < 3 {
                return Err(Error::InvalidArgument(format!(
                    "cell {c} has fewer than 3 vertices"
                )));
            }
            if signed_area(&vertices, loop_) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cell {c} is not counter-clockwise or has non-positive area"
                )));
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges: Vec<Vec<(usize, f64)>> = Vec::with_capacity(cells.len());

        for (c, loop_) in cells.iter().enumerate() {
            let mut local = Vec::with_capacity(loop_.len());
            for i in 0..loop_.len() {
                let a = loop_[i];
                let b = loop_[(i + 1) % loop_.len()];
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        normal: Vector2::zeros(),
                        cells: [None, None],
                        tag: BoundaryTag::Interior,
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                if edge.cells[0].is_none() {
                    edge.cells[0] = Some(c);
                } else if edge.cells[1].is_none() {
                    edge.cells[1] = Some(c);
                } else {
                    return Err(Error::NonManifoldEdge(key.0, key.1));
                }
                local.push((e, 0.0));
            }
            cell_edges.push(local);
        }

        let mut mesh = PolygonalMesh {
            vertices,
            cells,
            edges,
            cell_edges,
        };
        mesh.orient_edges()?;

        for edge in &mut mesh.edges {
            if edge.cells[1].is_none() {
                let mid = nalgebra::center(
                    &mesh.vertices[edge.vertices[0]],
                    &mesh.vertices[edge.vertices[1]],
                );
                edge.tag = boundary_tag(&mid);
                if edge.tag == BoundaryTag::Interior {
                    return Err(Error::InvalidArgument(format!(
                        "boundary predicate returned Interior for boundary edge at ({}, {})",
                        mid.x, mid.y
                    )));
                }
            }
        }
        Ok(mesh)
    }

    /// Sets each edge's global normal to the outward normal of its
    /// lowest-index incident cell and records the per-cell signs.
    fn orient_edges(&mut self) -> Result<()> {
        for (c, loop_) in self.cells.iter().enumerate() {
            for (i, entry) in self.cell_edges[c].iter_mut().enumerate() {
                let a = self.vertices[loop_[i]];
                let b = self.vertices[loop_[(i + 1) % loop_.len()]];
                let outward = outward_normal(&a, &b)?;
                let edge = &mut self.edges[entry.0];
                let owner = edge.cells[0].min(edge.cells[1].or(edge.cells[0])).unwrap();
                if owner == c {
                    edge.normal = outward;
                    entry.1 = 1.0;
                } else {
                    entry.1 = -1.0;
                }
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<Point2<f64>> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Endpoints of an edge in its global direction (lower vertex index
    /// first).
    pub fn edge_endpoints(&self, edge: usize) -> (Point2<f64>, Point2<f64>) {
        let e = &self.edges[edge];
        (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]])
    }

    /// Maximum element diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| element_geometry(self, c).map(|g| g.diameter).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }
}

fn signed_area(vertices: &[Point2<f64>], loop_: &[usize]) -> f64 {
    let mut sum = 0.0;
    for i in 0..loop_.len() {
        let a = vertices[loop_[i]];
        let b = vertices[loop_[(i + 1) % loop_.len()]];
        sum += a.x * b.y - b.x * a.y;
    }
    sum / 2.0
}

fn outward_normal(a: &Point2<f64>, b: &Point2<f64>) -> Result<Vector2<f64>> {
    let d = b - a;
    let len = d.norm();
    if len <= f64::MIN_POSITIVE.sqrt() {
        return Err(Error::DegenerateEdge(len));
    }
    // For a CCW loop, (dy, -dx) points out of the polygon.
    Ok(Vector2::new(d.y / len, -d.x / len))
}

/// Tensor-product mesh of nx-by-ny identical rectangles on
/// [0, width] x [0, height]. Boundary edges on the x-axis are tagged
/// Neumann, all other boundary edges Dirichlet.
pub fn build_rectangle_grid(
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
) -> Result<PolygonalMesh> {
    build_rectangle_grid_with_tags(nx, ny, width, height, |mid| {
        if mid.y.abs() < 1e-12 * height.max(1.0) {
            BoundaryTag::Neumann
        } else {
            BoundaryTag::Dirichlet
        }
    })
}

/// Same grid with a caller-supplied boundary tag predicate.
pub fn build_rectangle_grid_with_tags(
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    boundary_tag: impl Fn(&Point2<f64>) -> BoundaryTag,
) -> Result<PolygonalMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(
            "grid dimensions must be at least 1x1".into(),
        ));
    }
    if width <= 0.0 || height <= 0.0 {
        return Err(Error::InvalidArgument(
            "grid width and height must be positive".into(),
        ));
    }
    let dx = width / nx as f64;
    let dy = height / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point2::new(i as f64 * dx, j as f64 * dy));
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![
                vid(i, j),
                vid(i + 1, j),
                vid(i + 1, j + 1),
                vid(i, j + 1),
            ]);
        }
    }
    PolygonalMesh::from_cells(vertices, cells, boundary_tag)
}

/// Computes centroid, diameter, area and the per-edge outward normal data
/// of one cell.
pub fn element_geometry(mesh: &PolygonalMesh, cell: usize) -> Result<ElementGeometry> {
    if cell >= mesh.n_cells() {
        return Err(Error::InvalidArgument(format!(
            "cell index {cell} out of range ({} cells)",
            mesh.n_cells()
        )));
    }
    let loop_ = &mesh.cells[cell];
    let verts: Vec<Point2<f64>> = loop_.iter().map(|&v| mesh.vertices[v]).collect();
    let n = verts.len();

    let area = signed_area(&mesh.vertices, loop_);
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            diameter = diameter.max((verts[i] - verts[j]).norm());
        }
    }
    if area <= DEGENERACY_THRESHOLD * diameter * diameter {
        return Err(Error::DegenerateElement {
            cell,
            area,
            diameter,
        });
    }

    // Area centroid of the polygon.
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let cross = a.x * b.y - b.x * a.y;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    let centroid = Point2::new(cx / (6.0 * area), cy / (6.0 * area));

    let mut edge_lengths = Vec::with_capacity(n);
    let mut outward_normals = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        edge_lengths.push((b - a).norm());
        outward_normals.push(outward_normal(&a, &b)?);
        sigmas.push(mesh.cell_edges[cell][i].1);
    }

    Ok(ElementGeometry {
        cell,
        centroid,
        diameter,
        area,
        edge_lengths,
        outward_normals,
        sigmas,
    })
}

/// Cell aspect ratio: maximum over minimum edge length.
pub fn aspect_ratio(geometry: &ElementGeometry) -> f64 {
    let max = geometry.edge_lengths.iter().cloned().fold(0.0, f64::max);
    let min = geometry
        .edge_lengths
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    max / min
}

/// Imports a mesh from a plain-text description: a vertex count line,
/// one `x y` line per vertex, a cell count line and one CCW vertex-index
/// list per cell. Boundary tags are inferred from the predicate.
pub fn import_text(
    text: &str,
    boundary_tag: impl Fn(&Point2<f64>) -> BoundaryTag,
) -> Result<PolygonalMesh> {
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<&str> {
        tokens
            .next()
            .ok_or_else(|| Error::MeshImport(format!("unexpected end of input reading {what}")))
    };
    let n_vertices: usize = next("vertex count")?
        .parse()
        .map_err(|e| Error::MeshImport(format!("bad vertex count: {e}")))?;
    let mut vertices = Vec::with_capacity(n_vertices);
    for i in 0..n_vertices {
        let x: f64 = next("vertex x")?
            .parse()
            .map_err(|e| Error::MeshImport(format!("bad x coordinate of vertex {i}: {e}")))?;
        let y: f64 = next("vertex y")?
            .parse()
            .map_err(|e| Error::MeshImport(format!("bad y coordinate of vertex {i}: {e}")))?;
        vertices.push(Point2::new(x, y));
    }
    let n_cells: usize = next("cell count")?
        .parse()
        .map_err(|e| Error::MeshImport(format!("bad cell count: {e}")))?;
    let mut cells = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let m: usize = next("cell size")?
            .parse()
            .map_err(|e| Error::MeshImport(format!("bad vertex count of cell {c}: {e}")))?;
        let mut loop_ = Vec::with_capacity(m);
        for _ in 0..m {
            let v: usize = next("cell vertex")?
                .parse()
                .map_err(|e| Error::MeshImport(format!("bad vertex index in cell {c}: {e}")))?;
            if v >= n_vertices {
                return Err(Error::MeshImport(format!(
                    "vertex index {v} out of range in cell {c}"
                )));
            }
            loop_.push(v);
        }
        cells.push(loop_);
    }
    PolygonalMesh::from_cells(vertices, cells, boundary_tag)
}
