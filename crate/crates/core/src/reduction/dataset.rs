//! Sampled datasets and their on-disk formats.
//!
//! Binary layout, little-endian: magic `PTFD`, version `u32`, dim `u64`,
//! n `u64`, flags `u32` (bit 0 folded, bit 1 discretized), then `n·dim`
//! `f64` coordinates row by row, then `n` signs as `i8`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_basic_test, CoordinateSpace, FoldingBasis, PointSignPair, Provenance, ReductionError, TestParams};
use crate::gauss::RngSeed;
use crate::label_cover::SmoothLabelCoverInstance;

pub const DATASET_MAGIC: [u8; 4] = *b"PTFD";
pub const DATASET_VERSION: u32 = 1;

const FLAG_FOLDED: u32 = 1;
const FLAG_DISCRETIZED: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub space: CoordinateSpace,
    /// Row-major `n × dim` coordinates.
    pub points: Vec<f64>,
    pub signs: Vec<i8>,
    pub discretized: bool,
    pub provenance: Option<Vec<Provenance>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn is_folded(&self) -> bool {
        matches!(self.space, CoordinateSpace::Folded { .. })
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl IndexedParallelIterator<Item = (&[f64], i8)> {
        self.points.par_chunks(self.dim().max(1)).zip(self.signs.par_iter().copied())
    }
}

/// Parameters and seeds sufficient to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub n_points: usize,
    pub dim: usize,
    pub folded: bool,
    pub params: TestParams,
    /// Shift actually applied to non-noisy coordinates.
    pub eta_used: f64,
    pub seed: RngSeed,
    pub vertices: usize,
    pub k: u32,
    #[serde(rename = "L")]
    pub l: u32,
}

/// Samples `n_points` pairs in parallel, point `i` using the stream
/// `seed.derive(i)`, optionally projecting onto the folded subspace.
pub fn emit_instance(
    inst: &SmoothLabelCoverInstance,
    params: &TestParams,
    n_points: usize,
    fold: Option<&FoldingBasis>,
    seed: RngSeed,
    keep_provenance: bool,
) -> Result<(Dataset, DatasetManifest), ReductionError> {
    if n_points == 0 {
        return Err(ReductionError::NoPoints);
    }
    if params.k != inst.k {
        return Err(ReductionError::InvalidParams(format!("params use k = {} but the instance has k = {}", params.k, inst.k)));
    }
    let raw_space = CoordinateSpace::Raw { vertices: inst.num_vertices() as u32, k: inst.k };
    let space = match fold {
        Some(fb) => {
            if fb.ambient_dim() != raw_space.dim() {
                return Err(ReductionError::DimensionMismatch { expected: raw_space.dim(), got: fb.ambient_dim() });
            }
            CoordinateSpace::Folded { dim: fb.dim() as u32 }
        }
        None => raw_space,
    };
    let dist = params.distribution();
    let sampled: Vec<PointSignPair> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive(i as u64).rng();
            let mut p = sample_basic_test(inst, &dist, &mut rng);
            if let Some(fb) = fold {
                p.coords = fb.fold(&p.coords).expect("dimension checked");
            }
            if !keep_provenance {
                p.provenance = None;
            }
            p
        })
        .collect();
    let dim = space.dim();
    let mut points = Vec::with_capacity(n_points * dim);
    let mut signs = Vec::with_capacity(n_points);
    let mut provenance = keep_provenance.then(Vec::new);
    for p in sampled {
        points.extend_from_slice(&p.coords);
        signs.push(p.sign);
        if let (Some(all), Some(pr)) = (provenance.as_mut(), p.provenance) {
            all.push(pr);
        }
    }
    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        n_points,
        dim,
        folded: fold.is_some(),
        params: params.clone(),
        eta_used: dist.eta,
        seed,
        vertices: inst.num_vertices(),
        k: inst.k,
        l: inst.l,
    };
    let data = Dataset { space, points, signs, discretized: params.discretize.is_some(), provenance };
    Ok((data, manifest))
}

pub fn write_dataset<W: Write>(data: &Dataset, sink: W) -> Result<(), ReductionError> {
    let mut w = BufWriter::new(sink);
    let mut flags = 0;
    if data.is_folded() {
        flags |= FLAG_FOLDED;
    }
    if data.discretized {
        flags |= FLAG_DISCRETIZED;
    }
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(data.dim() as u64).to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    for x in &data.points {
        w.write_all(&x.to_le_bytes())?;
    }
    let signs: Vec<u8> = data.signs.iter().map(|&s| s as u8).collect();
    w.write_all(&signs)?;
    w.flush()?;
    Ok(())
}

/// Reads a dataset. Raw-space files do not record the vertex count, so they
/// come back with `vertices = dim / k` for the supplied `k` (or `k = 1`).
pub fn read_dataset<R: Read>(source: R, k: Option<u32>) -> Result<Dataset, ReductionError> {
    let mut r = BufReader::new(source);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(ReductionError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != DATASET_VERSION {
        return Err(ReductionError::Format(format!("unsupported version {version}")));
    }
    r.read_exact(&mut b8)?;
    let dim = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b4)?;
    let flags = u32::from_le_bytes(b4);
    let mut bytes = vec![0u8; n * dim * 8];
    r.read_exact(&mut bytes)?;
    let points = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut sb = vec![0u8; n];
    r.read_exact(&mut sb)?;
    let signs: Vec<i8> = sb.into_iter().map(|b| b as i8).collect();
    if signs.iter().any(|&s| s != 1 && s != -1) {
        return Err(ReductionError::Format("sign outside {-1, +1}".into()));
    }
    let space = if flags & FLAG_FOLDED != 0 {
        CoordinateSpace::Folded { dim: dim as u32 }
    } else {
        let k = k.unwrap_or(1);
        if dim % k as usize != 0 {
            return Err(ReductionError::Format(format!("dimension {dim} is not a multiple of k = {k}")));
        }
        CoordinateSpace::Raw { vertices: (dim / k as usize) as u32, k }
    };
    Ok(Dataset { space, points, signs, discretized: flags & FLAG_DISCRETIZED != 0, provenance: None })
}

/// CSV export: header `c0,...,c{dim-1},sign`, one row per point.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<(), ReductionError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|c| format!("c{c}")).collect();
    header.push("sign".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.point(i).iter().map(|x| x.to_string()).collect();
        rec.push(data.signs[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_cover::generate_yes_instance;
    use crate::reduction::build_folding_basis;

    #[test]
    fn binary_round_trip_and_determinism() {
        let mut rng = RngSeed::new(4).rng();
        let (inst, _) = generate_yes_instance(8, 3, 4, 2, &mut rng).unwrap();
        let params = TestParams::new(1, 0.1, 4).unwrap().with_eta(1e-3);
        let fb = build_folding_basis(&inst);
        let (a, m) = emit_instance(&inst, &params, 50, Some(&fb), RngSeed::new(7), false).unwrap();
        let (b, _) = emit_instance(&inst, &params, 50, Some(&fb), RngSeed::new(7), false).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.dim, fb.dim());
        let mut buf = Vec::new();
        write_dataset(&a, &mut buf).unwrap();
        assert_eq!(read_dataset(&buf[..], None).unwrap(), a);
        assert!(read_dataset(&b"XXXX"[..], None).is_err());
        assert!(matches!(
            emit_instance(&inst, &params, 0, None, RngSeed::new(7), false),
            Err(ReductionError::NoPoints)
        ));
    }

    #[test]
    fn raw_round_trip_keeps_k() {
        let mut rng = RngSeed::new(4).rng();
        let (inst, _) = generate_yes_instance(6, 3, 3, 2, &mut rng).unwrap();
        let params = TestParams::new(1, 0.1, 3).unwrap().with_eta(1e-3).with_discretization(Some(4));
        let (a, _) = emit_instance(&inst, &params, 10, None, RngSeed::new(1), true).unwrap();
        assert_eq!(a.provenance.as_ref().unwrap().len(), 10);
        let mut buf = Vec::new();
        write_dataset(&a, &mut buf).unwrap();
        let back = read_dataset(&buf[..], Some(3)).unwrap();
        assert_eq!(back.space, a.space);
        assert!(back.discretized);
        assert_eq!(back.points, a.points);
    }
}
