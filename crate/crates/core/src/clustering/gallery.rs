use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterModel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::store::ImageManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryMember {
    pub image_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryCluster {
    pub index: usize,
    pub size: usize,
    /// This cluster's fraction of the total inertia (0 when the total is 0).
    pub inertia_share: f64,
    pub members: Vec<GalleryMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGallery {
    pub k: usize,
    pub inertia: f64,
    pub clusters: Vec<GalleryCluster>,
}

/// Groups image ids by cluster, nearest-to-centroid first.
///
/// `ids` and `points` are the rows the model was fitted on. Every manifest
/// image must appear in `ids` and vice versa. Members at equal distance keep
/// manifest order.
pub fn export_cluster_gallery(
    model: &ClusterModel,
    ids: &[String],
    points: &FeatureMatrix,
    manifest: &ImageManifest,
) -> Result<ClusterGallery> {
    if ids.len() != model.assignments.len() || points.rows() != ids.len() {
        return Err(Error::Inconsistency(format!(
            "{} ids, {} points, {} assignments",
            ids.len(),
            points.rows(),
            model.assignments.len()
        )));
    }
    let assigned: HashSet<&str> = ids.iter().map(String::as_str).collect();
    if let Some(rec) = manifest.images.iter().find(|r| !assigned.contains(r.id.as_str())) {
        return Err(Error::Inconsistency(format!("image `{}` has no cluster assignment", rec.id)));
    }
    let in_manifest: HashSet<&str> = manifest.images.iter().map(|r| r.id.as_str()).collect();
    if let Some(id) = ids.iter().find(|id| !in_manifest.contains(id.as_str())) {
        return Err(Error::Inconsistency(format!("assigned id `{id}` is not in the manifest")));
    }

    let mut groups: Vec<Vec<(usize, f64, String)>> = vec![Vec::new(); model.k];
    let mut shares = vec![0.0; model.k];
    for (row, (id, &c)) in ids.iter().zip(&model.assignments).enumerate() {
        let wide: Vec<f64> = points.row(row).iter().map(|&v| v as f64).collect();
        let d2 = sq_dist(&wide, model.centroid(c));
        shares[c] += d2;
        let order = manifest.position(id).expect("checked above");
        groups[c].push((order, d2.sqrt(), id.clone()));
    }
    let total: f64 = shares.iter().sum();
    let clusters = groups
        .into_iter()
        .enumerate()
        .map(|(index, mut g)| {
            g.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            GalleryCluster {
                index,
                size: g.len(),
                inertia_share: if total > 0.0 { shares[index] / total } else { 0.0 },
                members: g
                    .into_iter()
                    .map(|(_, distance, image_id)| GalleryMember { image_id, distance })
                    .collect(),
            }
        })
        .collect();
    Ok(ClusterGallery {
        k: model.k,
        inertia: model.inertia,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{kmeans_fit, ClusterConfig};
    use crate::store::ImageRecord;

    fn setup() -> (Vec<String>, FeatureMatrix, ImageManifest) {
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let points = FeatureMatrix::from_rows(2, &[[0.0f32, 0.0], [10.0, 10.0], [0.0, 0.0], [10.0, 10.0]]).unwrap();
        let manifest = ImageManifest::new("m", ids.iter().map(|i| ImageRecord::new(i, format!("{i}.png"))).collect()).unwrap();
        (ids, points, manifest)
    }

    #[test]
    fn two_perfect_clusters() {
        let (ids, points, manifest) = setup();
        let model = kmeans_fit(&points, &ClusterConfig::new(2, 0)).unwrap();
        let g = export_cluster_gallery(&model, &ids, &points, &manifest).unwrap();
        assert_eq!(g.clusters.len(), 2);
        for c in &g.clusters {
            assert_eq!(c.size, 2);
            assert_eq!(c.members[0].distance, 0.0);
            assert_eq!(c.inertia_share, 0.0);
        }
    }

    #[test]
    fn single_cluster_holds_everything() {
        let (ids, points, manifest) = setup();
        let model = kmeans_fit(&points, &ClusterConfig::new(1, 0)).unwrap();
        let g = export_cluster_gallery(&model, &ids, &points, &manifest).unwrap();
        assert_eq!(g.clusters.len(), 1);
        let members: Vec<_> = g.clusters[0].members.iter().map(|m| m.image_id.as_str()).collect();
        // all equidistant, so manifest order is kept
        assert_eq!(members, ["a", "b", "c", "d"]);
        assert_eq!(g.clusters[0].inertia_share, 1.0);
    }

    #[test]
    fn manifest_image_without_assignment() {
        let (ids, points, manifest) = setup();
        let model = kmeans_fit(&points, &ClusterConfig::new(2, 0)).unwrap();
        let bigger = manifest.append([ImageRecord::new("e", "e.png")]).unwrap();
        assert!(matches!(
            export_cluster_gallery(&model, &ids, &points, &bigger),
            Err(Error::Inconsistency(_))
        ));
    }
}
