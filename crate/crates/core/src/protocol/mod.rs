//! Batch orchestration: configuration, protocol runs, Monte Carlo sweeps.
