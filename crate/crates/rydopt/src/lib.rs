//! Desk-scale neutral-atom toolkit for co-optimizing qubit positions and
//! control pulses on ground-state energy problems.
//!
//! The library nests two optimizers. The inner loop ([`pulse`]) runs
//! projected gradient descent on piecewise-constant laser amplitudes for a
//! fixed atom configuration, with an analytically exact gradient built from
//! cached propagators. The outer loop ([`cbo`]) is gradient-free: an
//! ensemble of agents, each carrying a candidate configuration and its own
//! pulses, drifts toward an exponentially weighted consensus of the
//! best-performing configurations, plus multiplicative exploration noise.
//! Position gradients are deliberately not used for the outer problem: the
//! interaction strength scales as an inverse power of the pair distance, so
//! coordinate gradients are dominated by whichever pair happens to be
//! closest (see [`pulse::position_gradient_terms`] for the diagnostic).
//!
//! Supporting modules: [`hilbert`] (dense states, operators and
//! piecewise-constant time evolution), [`hardware`] (encodings, control
//! and interaction Hamiltonians), [`configgen`] (box sampling of initial
//! configurations and distance-density fitting), [`problems`] (target
//! Hamiltonian sources and file I/O), and [`harness`] (seeded end-to-end
//! experiments behind the command-line interface).

pub mod hardware;
pub mod harness;
pub mod hilbert;
pub mod cbo;
pub mod configgen;
pub mod problems;
pub mod pulse;
