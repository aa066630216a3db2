//! Q-value models (stub).
