//! Composite-video synthesis: foreground LUT transfer, selection of a
//! mutually distinct LUT pool, and clip extraction from annotated videos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ensure_same_dims, FlowField, Frame, Mask, VideoSample};
use crate::lut::Lut3D;
use crate::metrics::fmse;

pub const DEFAULT_MIN_RATIO: f64 = 0.01;
pub const DEFAULT_SAMPLE_LENGTH: usize = 20;
pub const DEFAULT_POOL_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedLut {
    pub id: String,
    pub lut: Lut3D,
}

/// `M * f(I) + (1 - M) * I`: the foreground goes through `lut`, the
/// background is copied.
pub fn make_composite(real: &Frame, mask: &Mask, lut: &Lut3D) -> Result<Frame> {
    ensure_same_dims("make_composite", real.dims(), mask.dims())?;
    let nulls = lut.null_count();
    if nulls > 0 {
        return Err(Error::NullEntries(nulls));
    }
    let mut out = real.clone();
    for i in mask.foreground_indices() {
        let c = lut.eval(real.at(i)).expect("dense lut evaluates everywhere");
        out.set_at(i, c);
    }
    Ok(out)
}

/// Mean foreground MSE between the composites two LUTs produce, for every
/// pair of LUTs, averaged over the probe frames.
///
/// Probes with an empty foreground are skipped with a warning.
pub fn lut_pairwise_distance(luts: &[Lut3D], probes: &[(Frame, Mask)]) -> Result<Vec<Vec<f64>>> {
    if luts.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "pairwise distance needs at least 2 luts, got {}",
            luts.len()
        )));
    }
    let usable: Vec<&(Frame, Mask)> = probes
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            if p.1.foreground_count() == 0 {
                log::warn!("probe {i} has an empty foreground; skipped");
                None
            } else {
                Some(p)
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyForeground("no probe has a foreground"));
    }
    let l = luts.len();
    let per_probe = usable
        .par_iter()
        .map(|(frame, mask)| {
            let comps = luts
                .iter()
                .map(|lut| make_composite(frame, mask, lut))
                .collect::<Result<Vec<_>>>()?;
            let mut d = vec![vec![0.0; l]; l];
            for a in 0..l {
                for b in a + 1..l {
                    let v = fmse(&comps[a], &comps[b], mask)?;
                    d[a][b] = v;
                    d[b][a] = v;
                }
            }
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_probe.len() as f64;
    let mut out = vec![vec![0.0; l]; l];
    for d in &per_probe {
        for a in 0..l {
            for b in 0..l {
                out[a][b] += d[a][b] / n;
            }
        }
    }
    Ok(out)
}

/// Shrinks a pool to `k` members by repeatedly dropping one member of the
/// closest remaining pair.
///
/// Of the closest pair, the member with the smaller summed distance to the
/// rest of the pool is dropped; on a tie, the larger index goes. The closest
/// pair is the lexicographically first among equal distances. Returns the
/// survivors in ascending order.
pub fn select_diverse_luts(distance: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    let n = distance.len();
    if distance.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidParameter("distance matrix must be square".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {k} of {n} items"
        )));
    }
    let mut alive: Vec<usize> = (0..n).collect();
    while alive.len() > k {
        if alive.len() == 1 {
            alive.clear();
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for (ia, &a) in alive.iter().enumerate() {
            for &b in &alive[ia + 1..] {
                let d = distance[a][b];
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let spread = |x: usize| -> f64 { alive.iter().filter(|&&o| o != x).map(|&o| distance[x][o]).sum() };
        let (sa, sb) = (spread(a), spread(b));
        // a < b, so ties drop b.
        let drop = if sa < sb { a } else { b };
        alive.retain(|&x| x != drop);
    }
    Ok(alive)
}

/// Per-frame masks of one annotated object; `None` where it is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub id: String,
    pub masks: Vec<Option<Mask>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedVideo {
    pub id: String,
    pub frames: Vec<Frame>,
    pub objects: Vec<ObjectTrack>,
    /// Optional flows between consecutive frames.
    pub flows: Option<Vec<FlowField>>,
}

/// Extracts one clip per object: the first `length` consecutive frames in
/// which the object has a non-empty mask. Clips whose mean foreground ratio
/// is below `min_ratio` are dropped.
pub fn filter_samples(raw: &AnnotatedVideo, min_ratio: f64, length: usize) -> Result<Vec<VideoSample>> {
    if length == 0 {
        return Err(Error::InvalidParameter("sample length must be positive".into()));
    }
    let mut out = Vec::new();
    for obj in &raw.objects {
        if obj.masks.len() != raw.frames.len() {
            return Err(Error::MalformedSample(format!(
                "{}/{}: {} masks for {} frames",
                raw.id,
                obj.id,
                obj.masks.len(),
                raw.frames.len()
            )));
        }
        let present = |m: &Option<Mask>| m.as_ref().is_some_and(|m| m.foreground_count() > 0);
        let mut run = 0usize;
        let mut start = None;
        for (i, m) in obj.masks.iter().enumerate() {
            run = if present(m) { run + 1 } else { 0 };
            if run == length {
                start = Some(i + 1 - length);
                break;
            }
        }
        let Some(start) = start else {
            continue;
        };
        let range = start..start + length;
        let masks: Vec<Mask> = obj.masks[range.clone()]
            .iter()
            .map(|m| m.clone().expect("run frames have masks"))
            .collect();
        let ratio = masks.iter().map(Mask::foreground_ratio).sum::<f64>() / length as f64;
        if ratio < min_ratio {
            log::debug!("{}/{}: foreground ratio {ratio:.5} below {min_ratio}", raw.id, obj.id);
            continue;
        }
        let mut sample = VideoSample::new(
            format!("{}_{}", raw.id, obj.id),
            raw.frames[range.clone()].to_vec(),
            masks,
        )?;
        if let Some(flows) = &raw.flows {
            sample = sample.with_flows(flows[start..start + length - 1].to_vec())?;
        }
        out.push(sample);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub lut_id: String,
    pub frames: usize,
    /// Free text for curators, e.g. to mark rejected samples.
    #[serde(default)]
    pub review: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

/// Builds one composite sample per real sample. Each sample gets one LUT
/// drawn with a generator seeded by `seed`, applied to all its frames.
///
/// Returned samples hold composites in `frames` and the real frames in
/// `ground_truth`.
pub fn synthesize_dataset(
    reals: &[VideoSample],
    luts: &[NamedLut],
    seed: u64,
) -> Result<(Vec<VideoSample>, DatasetManifest)> {
    if luts.is_empty() {
        return Err(Error::InvalidParameter("lut pool is empty".into()));
    }
    if let Some(bad) = luts.iter().find(|l| !l.lut.is_dense()) {
        return Err(Error::InvalidParameter(format!(
            "lut '{}' has {} null entries",
            bad.id,
            bad.lut.null_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = reals.iter().map(|_| rng.random_range(0..luts.len())).collect();
    let samples = reals
        .par_iter()
        .zip(&picks)
        .map(|(real, &pick)| {
            real.validate()?;
            let lut = &luts[pick].lut;
            let composites = real
                .frames
                .iter()
                .zip(&real.masks)
                .map(|(f, m)| make_composite(f, m, lut))
                .collect::<Result<Vec<_>>>()?;
            let mut s = VideoSample::new(real.id.clone(), composites, real.masks.clone())?;
            if let Some(flows) = &real.flows {
                s = s.with_flows(flows.clone())?;
            }
            s.with_ground_truth(real.frames.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let entries = reals
        .iter()
        .zip(&picks)
        .map(|(r, &p)| ManifestEntry {
            sample_id: r.id.clone(),
            lut_id: luts[p].id.clone(),
            frames: r.frames.len(),
            review: String::new(),
        })
        .collect();
    Ok((samples, DatasetManifest { seed, entries }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe() -> (Frame, Mask) {
        let f = Frame::from_fn(8, 8, |x, y| [x as f64 * 30.0, y as f64 * 30.0, 90.0]);
        let m = Mask::from_fn(8, 8, |x, _| x < 4);
        (f, m)
    }

    fn offset_lut(off: f64) -> Lut3D {
        let id = Lut3D::identity(8).unwrap();
        Lut3D::from_fn(8, |r, g, b| id.entry(id.index(r, g, b)).map(|v| v + off)).unwrap()
    }

    #[test]
    fn composite_examples() {
        let (f, m) = probe();
        assert_eq!(make_composite(&f, &m, &Lut3D::identity(8).unwrap()).unwrap(), f);
        let none = Mask::filled(8, 8, false);
        assert_eq!(make_composite(&f, &none, &offset_lut(9.0)).unwrap(), f);
        let k = [1.0, 2.0, 3.0];
        let c = make_composite(&f, &m, &Lut3D::constant(4, k).unwrap()).unwrap();
        for i in 0..64 {
            if m.data()[i] {
                for (a, b) in c.at(i).iter().zip(&k) {
                    assert!((a - b).abs() < 1e-12);
                }
            } else {
                assert_eq!(c.at(i), f.at(i));
            }
        }
        assert!(matches!(
            make_composite(&f, &m, &Lut3D::null(4).unwrap()),
            Err(Error::NullEntries(_))
        ));
    }

    #[test]
    fn distance_examples() {
        let luts = vec![Lut3D::identity(8).unwrap(), offset_lut(5.0), Lut3D::identity(8).unwrap()];
        let d = lut_pairwise_distance(&luts, &[probe()]).unwrap();
        assert!((d[0][1] - 25.0).abs() < 1e-9);
        assert_eq!(d[0][2], 0.0);
        for a in 0..3 {
            assert_eq!(d[a][a], 0.0);
            for b in 0..3 {
                assert!((d[a][b] - d[b][a]).abs() < 1e-9);
            }
        }
        let empty = (probe().0, Mask::filled(8, 8, false));
        let d2 = lut_pairwise_distance(&luts, &[empty.clone(), probe()]).unwrap();
        assert_eq!(d, d2);
        assert!(lut_pairwise_distance(&luts, &[empty]).is_err());
        assert!(lut_pairwise_distance(&luts[..1], &[probe()]).is_err());
    }

    #[test]
    fn selection_examples() {
        let d3 = vec![
            vec![0.0, 1.0, 10.0],
            vec![1.0, 0.0, 10.0],
            vec![10.0, 10.0, 0.0],
        ];
        assert_eq!(select_diverse_luts(&d3, 2).unwrap(), vec![0, 2]);
        assert_eq!(select_diverse_luts(&d3, 3).unwrap(), vec![0, 1, 2]);
        let d4: Vec<Vec<f64>> = (0..4)
            .map(|a| (0..4).map(|b| (a as f64 - b as f64).abs()).collect())
            .collect();
        assert_eq!(select_diverse_luts(&d4, 2).unwrap(), vec![0, 3]);
        assert_eq!(select_diverse_luts(&d4, 0).unwrap(), Vec::<usize>::new());
        assert!(select_diverse_luts(&d4, 5).is_err());
    }

    fn video(present: &[bool], ratio_px: usize) -> AnnotatedVideo {
        let n = present.len();
        let frames = vec![Frame::filled(10, 10, [1.0; 3]); n];
        let masks = present
            .iter()
            .map(|&p| p.then(|| Mask::from_fn(10, 10, |x, y| y * 10 + x < ratio_px)))
            .collect();
        AnnotatedVideo {
            id: "v".into(),
            frames,
            objects: vec![ObjectTrack {
                id: "o".into(),
                masks,
            }],
            flows: Some(vec![FlowField::zeros(10, 10); n - 1]),
        }
    }

    #[test]
    fn filter_examples() {
        let v19 = video(&[true; 19], 5);
        assert!(filter_samples(&v19, 0.01, 20).unwrap().is_empty());
        let mut p = vec![false; 3];
        p.extend([true; 25]);
        let v25 = video(&p, 5);
        let s = filter_samples(&v25, 0.01, 20).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].frames.len(), 20);
        assert_eq!(s[0].flows.as_ref().unwrap().len(), 19);
        assert_eq!(s[0].id, "v_o");
        // 1 pixel of 200 per frame would be 0.5%; use a bigger frame.
        let mut small = video(&[true; 20], 1);
        small.frames = vec![Frame::filled(20, 10, [1.0; 3]); 20];
        small.objects[0].masks = (0..20)
            .map(|_| Some(Mask::from_fn(20, 10, |x, y| x == 0 && y == 0)))
            .collect();
        small.flows = None;
        assert!(filter_samples(&small, 0.01, 20).unwrap().is_empty());
    }

    #[test]
    fn synthesis_is_seeded() {
        let (f, m) = probe();
        let reals: Vec<VideoSample> = (0..6)
            .map(|i| VideoSample::new(format!("s{i}"), vec![f.clone(); 2], vec![m.clone(); 2]).unwrap())
            .collect();
        let luts = vec![
            NamedLut { id: "id".into(), lut: Lut3D::identity(8).unwrap() },
            NamedLut { id: "plus5".into(), lut: offset_lut(5.0) },
            NamedLut { id: "plus9".into(), lut: offset_lut(9.0) },
        ];
        let (s1, m1) = synthesize_dataset(&reals, &luts, 11).unwrap();
        let (s2, m2) = synthesize_dataset(&reals, &luts, 11).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(s1, s2);
        for (s, e) in s1.iter().zip(&m1.entries) {
            let gt = s.ground_truth.as_ref().unwrap();
            let d = fmse(&s.frames[0], &gt[0], &s.masks[0]).unwrap();
            if e.lut_id == "id" {
                assert_eq!(d, 0.0);
            } else {
                assert!(d > 0.0);
            }
        }
        let (only_id, _) = synthesize_dataset(&reals, &luts[..1], 3).unwrap();
        for s in &only_id {
            assert_eq!(&s.frames, s.ground_truth.as_ref().unwrap());
        }
        assert!(synthesize_dataset(&reals, &[], 1).is_err());
    }
}
