//! Pixel-aggregated confusion matrices and intersection-over-union.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::LabelMap;

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn diagonal_sum(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::ShapeMismatch(format!(
                "prediction is {:?}, ground truth is {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        let classes = self.classes;
        let check = |v: u8| {
            if (v as usize) < classes {
                Ok(v as usize)
            } else {
                Err(Error::ClassOutOfRange {
                    class: v as usize,
                    classes,
                })
            }
        };
        // Validate before touching the counts so a failed call leaves them intact.
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            check(p)?;
            check(g)?;
        }
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            self.counts[g as usize * classes + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "merging {}-class and {}-class matrices",
                self.classes, other.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class IoU (`None` for classes absent from both prediction and
    /// ground truth) and their mean over present classes.
    pub fn mean_iou(&self) -> Result<IouSummary> {
        if self.total() == 0 {
            return Err(Error::EmptyMatrix);
        }
        let per_class: Vec<Option<f64>> = (0..self.classes)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..self.classes).map(|p| self.get(c, p)).sum();
                let col: u64 = (0..self.classes).map(|t| self.get(t, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        Ok(IouSummary { per_class, mean })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouSummary {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// Named IoU table, rendered as text or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub classes: Vec<String>,
    pub iou: Vec<Option<f64>>,
    pub mean: f64,
    pub images: usize,
    pub pixels: u64,
}

impl IouReport {
    pub fn new(names: Vec<String>, cm: &ConfusionMatrix, images: usize) -> Result<Self> {
        let s = cm.mean_iou()?;
        Ok(IouReport {
            classes: names,
            iou: s.per_class,
            mean: s.mean,
            images,
            pixels: cm.total(),
        })
    }

    /// One header row and one value row, IoU in percent.
    pub fn to_text(&self, label: &str) -> String {
        let mut header = format!("{:<24}", "method");
        let mut row = format!("{label:<24}");
        for (name, v) in self.classes.iter().zip(&self.iou) {
            let width = name.len().max(7);
            header.push_str(&format!(" {name:>width$}"));
            match v {
                Some(v) => row.push_str(&format!(" {:>width$.2}", v * 100.0)),
                None => row.push_str(&format!(" {:>width$}", "-")),
            }
        }
        header.push_str(&format!(" {:>7}", "mIoU"));
        row.push_str(&format!(" {:>7.2}", self.mean * 100.0));
        format!("{header}\n{row}\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(w: u32, x0: u32, y0: u32, side: u32) -> LabelMap {
        let v = (0..w * w)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                u8::from(x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
            })
            .collect();
        LabelMap::new(w, w, 2, v).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = square(100, 10, 10, 10);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &gt).unwrap();
        assert_eq!(cm.diagonal_sum(), 10_000);
        let s = cm.mean_iou().unwrap();
        assert_eq!(s.mean, 1.0);
    }

    #[test]
    fn all_wrong_counts_off_diagonal() {
        let gt = LabelMap::filled(10, 1, 2, 1);
        let pred = LabelMap::filled(10, 1, 2, 0);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &gt).unwrap();
        assert_eq!(cm.get(1, 0), 10);
        let s = cm.mean_iou().unwrap();
        assert_eq!(s.per_class, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn half_overlap_is_one_third() {
        let gt = square(100, 10, 10, 10);
        let pred = square(100, 15, 10, 10);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&pred, &gt).unwrap();
        let s = cm.mean_iou().unwrap();
        assert_eq!(s.per_class[1], Some(50.0 / 150.0));
    }

    #[test]
    fn absent_classes_are_excluded() {
        let gt = LabelMap::filled(4, 4, 3, 0);
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&gt, &gt).unwrap();
        let s = cm.mean_iou().unwrap();
        assert_eq!(s.per_class, vec![Some(1.0), None, None]);
        assert_eq!(s.mean, 1.0);
    }

    #[test]
    fn errors() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(matches!(cm.mean_iou(), Err(Error::EmptyMatrix)));
        let a = LabelMap::filled(2, 2, 3, 2);
        let b = LabelMap::filled(2, 2, 3, 0);
        assert!(matches!(cm.accumulate(&a, &b), Err(Error::ClassOutOfRange { class: 2, .. })));
        assert_eq!(cm.total(), 0);
        assert!(matches!(cm.accumulate(&LabelMap::filled(2, 1, 2, 0), &LabelMap::filled(1, 2, 2, 0)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn text_report_shape() {
        let gt = square(20, 2, 2, 5);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &gt).unwrap();
        let r = IouReport::new(vec!["bkg".into(), "fg".into()], &cm, 1).unwrap();
        let text = r.to_text("self");
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("100.00"));
    }

    fn arb_maps() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>)> {
        let v = || prop::collection::vec(0u8..4, 36);
        (v(), v(), v(), v())
    }

    proptest! {
        #[test]
        fn self_iou_is_one(v in prop::collection::vec(0u8..5, 1..64)) {
            let m = LabelMap::new(v.len() as u32, 1, 5, v).unwrap();
            let mut cm = ConfusionMatrix::new(5);
            cm.accumulate(&m, &m).unwrap();
            prop_assert_eq!(cm.mean_iou().unwrap().mean, 1.0);
        }

        #[test]
        fn permutation_and_aggregation((p1, g1, p2, g2) in arb_maps(), perm in Just([2u8, 0, 3, 1]).prop_shuffle()) {
            let lm = |v: &Vec<u8>| LabelMap::new(6, 6, 4, v.clone()).unwrap();
            let mut a = ConfusionMatrix::new(4);
            a.accumulate(&lm(&p1), &lm(&g1)).unwrap();
            let mut b = ConfusionMatrix::new(4);
            b.accumulate(&lm(&p2), &lm(&g2)).unwrap();
            let mut both = ConfusionMatrix::new(4);
            both.accumulate(&lm(&p2), &lm(&g2)).unwrap();
            both.accumulate(&lm(&p1), &lm(&g1)).unwrap();
            let mut summed = a.clone();
            summed.merge(&b).unwrap();
            prop_assert_eq!(&summed, &both);

            let permute = |v: &Vec<u8>| v.iter().map(|&c| perm[c as usize]).collect::<Vec<u8>>();
            let mut pa = ConfusionMatrix::new(4);
            pa.accumulate(&lm(&permute(&p1)), &lm(&permute(&g1))).unwrap();
            let (s, ps) = (a.mean_iou().unwrap(), pa.mean_iou().unwrap());
            for c in 0..4 {
                prop_assert_eq!(s.per_class[c], ps.per_class[perm[c] as usize]);
            }
            prop_assert!((s.mean - ps.mean).abs() < 1e-12);
        }
    }
}
