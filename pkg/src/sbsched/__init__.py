"""ON/OFF scheduling of energy-harvesting small cells via online ski-rental policies.

Subpackages:
    network    -- node placement, channel gains, SINR/SNR, association, rates, delay
    energy     -- BS power model, Poisson harvesting, bounded storage dynamics
    pricing    -- per-second rent price, one-time buy price, offline optimal cost
    schedulers -- DOA / ROA / adaptive / baseline OFF-time policies
    oracle     -- offline exhaustive search over OFF-time schedules
    engine     -- time-stepped period simulation and metrics
    analysis   -- closed-form and Monte Carlo competitive analysis
    cli        -- experiment configuration, orchestration, and output writing
"""

__version__ = "0.1.0"
