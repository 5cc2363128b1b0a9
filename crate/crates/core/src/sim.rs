//! Discrete-event execution of a plan with a stochastic human, online robot
//! motion, safety slowdowns, replanning, and the collaboration metrics.
//! Placeholder module shell; filled in below.
