//! Seeded tidy-up environments, execution noise, benchmark scoring and the episode runner.

pub mod env;
pub mod episode;
pub mod scenario;
pub mod score;

pub use env::{execute_step, generate_training_data, observe, scatter, NoiseProfile, SimObject, StepOutcome};
pub use episode::{
    run_episode, Episode, EpisodeLog, NearestPlanner, ProposedPlanner, RandomPlanner, TidyPlanner,
};
pub use scenario::{Scenario, Stage};
pub use score::{score, ScoreSheet};
