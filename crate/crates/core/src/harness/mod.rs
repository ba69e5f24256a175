//! Synthetic scenes, evaluation metrics and the quantization study.

pub mod corpus;
pub mod io;
pub mod metrics;
pub mod scene;
pub mod study;

pub use corpus::{
    benchmark_anchors, mine_hard_negatives, example_camera, random_scene, standard_corpus, training_set, CorpusConfig, SampleConfig,
    SampleError, ToyTrainConfig, TrainingSet, train_toy_classifier,
};
pub use io::{parse_annotations, parse_detections, write_annotations, write_detections, Annotation, DetectionRecord};
pub use metrics::{distance_error, distance_errors, evaluate, DistanceError, MetricsReport, ScoredBox, TruthBox};
pub use scene::{render_scene, vehicle_box, GroundTruth, SceneSpec, VehicleSpec};
pub use study::{quantization_study, study_table, StudyConfig, StudyError, StudyRow};
