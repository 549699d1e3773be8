pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod datagen;
pub mod evaluation;
pub mod experiment;
pub mod kinematics;
pub mod language;
pub mod model;
pub mod scene;
pub mod training;
