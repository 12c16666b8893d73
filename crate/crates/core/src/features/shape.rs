//! Mask shape descriptors. The volumetric surface is a marching-tetrahedra
//! triangulation of the binary mask at iso-level 0.5 (each lattice cube split
//! into six tetrahedra around its main diagonal); the planar outline comes
//! from marching squares. Volume and area enclosed by those raw meshes are
//! exact, but a binary staircase inflates surface area by 20-30 %, so the
//! surface is Taubin-smoothed and rescaled to the raw enclosed volume before
//! area, perimeter and diameter are measured. Axis lengths use the
//! covariance of voxel centers.
//!
//! Planar slots (same order as [`NAMES`]):
//!
//! | 3D slot                 | 2D value                          |
//! |-------------------------|-----------------------------------|
//! | MeshVolume              | mesh area                         |
//! | VoxelVolume             | pixel area                        |
//! | SurfaceArea             | perimeter                         |
//! | SurfaceVolumeRatio      | perimeter / mesh area             |
//! | Sphericity              | circularity `2√(πA)/P`            |
//! | Compactness1            | `A / (√π P²)`                     |
//! | Compactness2            | `4πA / P²`                        |
//! | SphericalDisproportion  | `P / (2√(πA))`                    |
//! | Maximum3DDiameter       | maximum 2D diameter               |
//! | MajorAxisLength         | major axis                        |
//! | MinorAxisLength         | minor axis                        |
//! | LeastAxisLength         | minor axis                        |
//! | Elongation              | `√(λ_minor/λ_major)`              |
//! | Flatness                | `√(λ_minor/λ_major)`              |

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3};

pub const NAMES: [&str; 14] = [
    "MeshVolume",
    "VoxelVolume",
    "SurfaceArea",
    "SurfaceVolumeRatio",
    "Sphericity",
    "Compactness1",
    "Compactness2",
    "SphericalDisproportion",
    "Maximum3DDiameter",
    "MajorAxisLength",
    "MinorAxisLength",
    "LeastAxisLength",
    "Elongation",
    "Flatness",
];

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P3, b: P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

fn tri_area(a: P3, b: P3, c: P3) -> f64 {
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}


/// Kuhn decomposition: tetrahedra (0, e_a, e_a + e_b, 7) over axis orders.
const TETS: [[usize; 4]; 6] = {
    const fn bit(a: usize) -> usize {
        1 << a
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = [[0usize; 4]; 6];
    let mut k = 0;
    while k < 6 {
        let p = PERMS[k];
        out[k] = [0, bit(p[0]), bit(p[0]) | bit(p[1]), 7];
        k += 1;
    }
    out
};

/// Taubin smoothing passes applied to both the surface and the contour.
pub const SMOOTHING_ITERATIONS: usize = 40;
const TAUBIN_LAMBDA: f64 = 0.5;
const TAUBIN_MU: f64 = -0.53;

/// Alternating shrink/inflate Laplacian steps; removes the staircase of a
/// binary iso-surface. Low-frequency shape is kept but very small loops
/// still shrink, so callers rescale afterwards.
fn taubin<const D: usize>(pos: &mut [[f64; D]], nbrs: &[Vec<usize>]) {
    let mut next = pos.to_vec();
    for _ in 0..SMOOTHING_ITERATIONS {
        for factor in [TAUBIN_LAMBDA, TAUBIN_MU] {
            for (i, n) in nbrs.iter().enumerate() {
                if n.is_empty() {
                    continue;
                }
                let mut mean = [0.0; D];
                for &j in n {
                    for a in 0..D {
                        mean[a] += pos[j][a];
                    }
                }
                for a in 0..D {
                    next[i][a] = pos[i][a] + factor * (mean[a] / n.len() as f64 - pos[i][a]);
                }
            }
            pos.copy_from_slice(&next);
        }
    }
}

/// Scale about the vertex mean by `factor`.
fn rescale<const D: usize>(pos: &mut [[f64; D]], factor: f64) {
    let mut c = [0.0; D];
    for p in pos.iter() {
        for a in 0..D {
            c[a] += p[a] / pos.len() as f64;
        }
    }
    for p in pos.iter_mut() {
        for a in 0..D {
            p[a] = c[a] + factor * (p[a] - c[a]);
        }
    }
}

fn adjacency(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for (a, b) in edges {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    for l in &mut nbrs {
        l.sort_unstable();
        l.dedup();
    }
    nbrs
}

/// Vertex positions keyed by lattice edge, in first-seen order.
struct VertexPool<const D: usize> {
    index: HashMap<(usize, usize), usize>,
    pos: Vec<[f64; D]>,
}

impl<const D: usize> VertexPool<D> {
    fn new() -> Self {
        VertexPool {
            index: HashMap::new(),
            pos: Vec::new(),
        }
    }

    fn get(&mut self, ida: usize, idb: usize, pa: [f64; D], pb: [f64; D]) -> usize {
        let key = (ida.min(idb), ida.max(idb));
        let pos = &mut self.pos;
        *self.index.entry(key).or_insert_with(|| {
            let mut m = [0.0; D];
            for a in 0..D {
                m[a] = (pa[a] + pb[a]) * 0.5;
            }
            pos.push(m);
            pos.len() - 1
        })
    }
}

struct Mesh {
    vertices: Vec<P3>,
    triangles: Vec<[usize; 3]>,
}

/// Oriented (outward) iso-0.5 triangulation of the zero-padded mask.
fn mesh_3d(mask: &[u8], dims: [usize; 3], spacing: [f64; 3]) -> Mesh {
    let pd = [dims[0] + 2, dims[1] + 2, dims[2] + 2];
    let val = |x: usize, y: usize, z: usize| -> bool {
        if x == 0 || y == 0 || z == 0 || x > dims[0] || y > dims[1] || z > dims[2] {
            false
        } else {
            mask[(x - 1) + dims[0] * ((y - 1) + dims[1] * (z - 1))] != 0
        }
    };
    let mut pool = VertexPool::<3>::new();
    let mut triangles = Vec::new();
    for cz in 0..pd[2] - 1 {
        for cy in 0..pd[1] - 1 {
            for cx in 0..pd[0] - 1 {
                let mut inside = [false; 8];
                let mut pos = [[0.0; 3]; 8];
                let mut id = [0usize; 8];
                for k in 0..8 {
                    let c = [cx + (k & 1), cy + ((k >> 1) & 1), cz + ((k >> 2) & 1)];
                    inside[k] = val(c[0], c[1], c[2]);
                    pos[k] = [c[0] as f64 * spacing[0], c[1] as f64 * spacing[1], c[2] as f64 * spacing[2]];
                    id[k] = c[0] + pd[0] * (c[1] + pd[1] * c[2]);
                }
                let n_in = inside.iter().filter(|&&b| b).count();
                if n_in == 0 || n_in == 8 {
                    continue;
                }
                for tet in TETS {
                    let (ins, outs): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&v| inside[v]);
                    if ins.is_empty() || outs.is_empty() {
                        continue;
                    }
                    let outward = sub(pos[outs[0]], pos[ins[0]]);
                    let mut cut = |a: usize, b: usize| pool.get(id[a], id[b], pos[a], pos[b]);
                    let emit = |t: [usize; 3], pool_pos: &[P3], tris: &mut Vec<[usize; 3]>| {
                        let n = cross(sub(pool_pos[t[1]], pool_pos[t[0]]), sub(pool_pos[t[2]], pool_pos[t[0]]));
                        tris.push(if dot(n, outward) >= 0.0 { t } else { [t[0], t[2], t[1]] });
                    };
                    match ins.len() {
                        1 => {
                            let t = [cut(ins[0], outs[0]), cut(ins[0], outs[1]), cut(ins[0], outs[2])];
                            emit(t, &pool.pos, &mut triangles);
                        }
                        3 => {
                            let t = [cut(ins[0], outs[0]), cut(ins[1], outs[0]), cut(ins[2], outs[0])];
                            emit(t, &pool.pos, &mut triangles);
                        }
                        _ => {
                            let p00 = cut(ins[0], outs[0]);
                            let p01 = cut(ins[0], outs[1]);
                            let p10 = cut(ins[1], outs[0]);
                            let p11 = cut(ins[1], outs[1]);
                            emit([p00, p01, p11], &pool.pos, &mut triangles);
                            emit([p00, p11, p10], &pool.pos, &mut triangles);
                        }
                    }
                }
            }
        }
    }
    Mesh {
        vertices: pool.pos,
        triangles,
    }
}

fn enclosed_volume(vertices: &[P3], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| dot(vertices[t[0]], cross(vertices[t[1]], vertices[t[2]])) / 6.0)
        .sum::<f64>()
        .abs()
}

/// Smoothed surface rescaled to the volume enclosed by the raw mesh:
/// (volume, area, vertices).
fn smoothed_surface(mask: &[u8], dims: [usize; 3], spacing: [f64; 3]) -> (f64, f64, Vec<P3>) {
    let Mesh {
        mut vertices,
        triangles,
    } = mesh_3d(mask, dims, spacing);
    let volume = enclosed_volume(&vertices, &triangles);
    let nbrs = adjacency(
        vertices.len(),
        triangles.iter().flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]),
    );
    taubin(&mut vertices, &nbrs);
    let factor = (volume / enclosed_volume(&vertices, &triangles)).cbrt();
    rescale(&mut vertices, factor);
    let area = triangles
        .iter()
        .map(|t| tri_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
        .sum();
    (volume, area, vertices)
}

fn max_distance(points: &[P3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = sub(*a, *b);
            best = best.max(dot(d, d));
        }
    }
    best.sqrt()
}

/// Population covariance eigenvalues of voxel-center coordinates, descending.
fn axis_eigenvalues_3d(mask: &[u8], dims: [usize; 3], spacing: [f64; 3]) -> [f64; 3] {
    let mut n = 0.0;
    let mut mean = [0.0; 3];
    let mut pts = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        if m != 0 {
            let c = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
            let p = [c[0] as f64 * spacing[0], c[1] as f64 * spacing[1], c[2] as f64 * spacing[2]];
            for a in 0..3 {
                mean[a] += p[a];
            }
            n += 1.0;
            pts.push(p);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov: Matrix3<f64> = Matrix3::zeros();
    for p in &pts {
        for a in 0..3 {
            for b in 0..3 {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]) / n;
            }
        }
    }
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    [ev[0], ev[1], ev[2]]
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        1.0
    }
}

/// Volumetric shape descriptors of a binary mask on a grid with `spacing`.
pub fn shape_3d(mask: &[u8], dims: [usize; 3], spacing: [f64; 3]) -> [f64; 14] {
    let (v, a, verts) = smoothed_surface(mask, dims, spacing);
    let voxels = mask.iter().filter(|&&m| m != 0).count() as f64;
    let voxel_volume = voxels * spacing[0] * spacing[1] * spacing[2];
    let sphere_term = (36.0 * PI * v * v).cbrt();
    let ev = axis_eigenvalues_3d(mask, dims, spacing);
    [
        v,
        voxel_volume,
        a,
        a / v,
        sphere_term / a,
        v / (PI.sqrt() * a.powf(1.5)),
        36.0 * PI * v * v / (a * a * a),
        a / sphere_term,
        max_distance(&verts),
        4.0 * ev[0].sqrt(),
        4.0 * ev[1].sqrt(),
        4.0 * ev[2].sqrt(),
        ratio(ev[1], ev[0]),
        ratio(ev[2], ev[0]),
    ]
}

/// Planar analogues of [`shape_3d`] for one slice (`dims` = nx, ny).
pub fn shape_2d(mask: &[u8], dims: [usize; 2], spacing: [f64; 2]) -> [f64; 14] {
    let pd = [dims[0] + 2, dims[1] + 2];
    let val = |x: usize, y: usize| -> bool {
        x > 0 && y > 0 && x <= dims[0] && y <= dims[1] && mask[(x - 1) + dims[0] * (y - 1)] != 0
    };
    let mut pool = VertexPool::<2>::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();
    // corners walked counter-clockwise
    const CORNERS: [[usize; 2]; 4] = [[0, 0], [1, 0], [1, 1], [0, 1]];
    for cy in 0..pd[1] - 1 {
        for cx in 0..pd[0] - 1 {
            let c: Vec<([f64; 2], bool, usize)> = CORNERS
                .iter()
                .map(|o| {
                    let (x, y) = (cx + o[0], cy + o[1]);
                    ([x as f64 * spacing[0], y as f64 * spacing[1]], val(x, y), x + pd[0] * y)
                })
                .collect();
            let n_in = c.iter().filter(|t| t.1).count();
            if n_in == 0 || n_in == 4 {
                continue;
            }
            // cell polygon as (vertex, is_crossing); consecutive crossings
            // bound a contour segment with the inside on its left
            let mut poly: Vec<(usize, bool)> = Vec::with_capacity(6);
            for k in 0..4 {
                let (p, ins, id) = c[k];
                let (q, qins, qid) = c[(k + 1) % 4];
                if ins {
                    poly.push((usize::MAX, false));
                }
                if ins != qins {
                    poly.push((pool.get(id, qid, p, q), true));
                }
            }
            let n = poly.len();
            for k in 0..n {
                let (a, ac) = poly[k];
                let (b, bc) = poly[(k + 1) % n];
                if ac && bc {
                    segments.push([a, b]);
                }
            }
        }
    }
    let shoelace = |v: &[[f64; 2]]| -> f64 {
        segments
            .iter()
            .map(|s| 0.5 * (v[s[0]][0] * v[s[1]][1] - v[s[1]][0] * v[s[0]][1]))
            .sum::<f64>()
    };
    let mut vertices = pool.pos;
    let area = shoelace(&vertices);
    let nbrs = adjacency(vertices.len(), segments.iter().map(|s| (s[0], s[1])));
    taubin(&mut vertices, &nbrs);
    let factor = (area / shoelace(&vertices)).sqrt();
    rescale(&mut vertices, factor);
    let perimeter: f64 = segments
        .iter()
        .map(|s| {
            let (a, b) = (vertices[s[0]], vertices[s[1]]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .sum();
    let pixels = mask.iter().filter(|&&m| m != 0).count() as f64;
    let pixel_area = pixels * spacing[0] * spacing[1];
    let circ_den = 2.0 * (PI * area).sqrt();
    let pts: Vec<P3> = vertices.iter().map(|p| [p[0], p[1], 0.0]).collect();

    let mut n = 0.0;
    let mut mean = [0.0; 2];
    let mut coords = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        if m != 0 {
            let p = [(i % dims[0]) as f64 * spacing[0], (i / dims[0]) as f64 * spacing[1]];
            mean[0] += p[0];
            mean[1] += p[1];
            n += 1.0;
            coords.push(p);
        }
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut cov: Matrix2<f64> = Matrix2::zeros();
    for p in &coords {
        for a in 0..2 {
            for b in 0..2 {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]) / n;
            }
        }
    }
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let elong = ratio(ev[1], ev[0]);
    [
        area,
        pixel_area,
        perimeter,
        perimeter / area,
        circ_den / perimeter,
        area / (PI.sqrt() * perimeter * perimeter),
        4.0 * PI * area / (perimeter * perimeter),
        perimeter / circ_den,
        max_distance(&pts),
        4.0 * ev[0].sqrt(),
        4.0 * ev[1].sqrt(),
        4.0 * ev[1].sqrt(),
        elong,
        elong,
    ]
}
