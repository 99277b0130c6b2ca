use std::path::Path;

use super::{load_annotations, load_features, FeatureSequence, VaSeries};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub features: FeatureSequence,
    pub labels: VaSeries,
}

impl Video {
    pub fn id(&self) -> &str {
        &self.features.video_id
    }
}

/// Immutable collection of videos, ordered by id.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    videos: Vec<Video>,
}

impl Dataset {
    pub fn new(mut videos: Vec<Video>) -> Result<Self> {
        videos.sort_by(|a, b| a.id().cmp(b.id()));
        for w in videos.windows(2) {
            if w[0].id() == w[1].id() {
                return Err(Error::Config(format!("duplicate video id `{}`", w[0].id())));
            }
        }
        for v in &videos {
            if v.labels.len() != v.features.n_frames() {
                return Err(Error::shape(
                    "Dataset::new",
                    &[v.features.n_frames()],
                    &[v.labels.len()],
                ));
            }
        }
        Ok(Self { videos })
    }

    /// Loads every `<id>.fvec` in `features_dir` with its `<id>.csv` from
    /// `annotations_dir`.
    pub fn load(features_dir: &Path, annotations_dir: &Path) -> Result<Self> {
        for dir in [features_dir, annotations_dir] {
            if !dir.is_dir() {
                return Err(Error::io(
                    dir,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
                ));
            }
        }
        let mut paths: Vec<_> = std::fs::read_dir(features_dir)
            .map_err(|e| Error::io(features_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "fvec"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Config(format!(
                "no .fvec files in {}",
                features_dir.display()
            )));
        }
        let videos = paths
            .iter()
            .map(|p| {
                let features = load_features(p)?;
                let ann = annotations_dir.join(format!("{}.csv", features.video_id));
                let labels = load_annotations(&ann, Some(features.n_frames()))?;
                Ok(Video { features, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(videos)
    }

    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.id().to_string()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Video> {
        self.videos
            .binary_search_by(|v| v.id().cmp(id))
            .ok()
            .map(|i| &self.videos[i])
    }

    /// Videos for `ids`, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&Video>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| Error::Config(format!("unknown video id `{id}`")))
            })
            .collect()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.videos.first().map(|v| v.features.dim())
    }
}
