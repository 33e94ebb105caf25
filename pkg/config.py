"""
Configuration settings for the Growth-Fragmentation Toolkit
"""

__version__ = "0.4.0"

# Seeds
SEED_ENV_VAR = 'GF_SEED'  # Environment variable consulted for the master seed
DEFAULT_SEED = 20240611  # Used when neither CLI, config nor environment set one

# Model validation
VALIDATION = {
    'grid_points': 512,  # Log-spaced points over the working domain
    'conservation_tolerance': 1e-9,  # Relative residual of mass conservation
    'fragment_tolerance': 1e-9,  # |∫ p(u) u du - 1|
    'thinning_safety_factor': 1.001,  # K̄ = sup K × this factor
    'bound_extension': 1e3,  # Rate bounds sampled this far beyond each end
    'bound_growth_tolerance': 1e-3,  # Allowed relative rise of sup K one decade further out
    'irreducibility_lookahead': 4  # Nodes above x searched for mass below x
}

# Adaptive quadrature (scipy.integrate.quad)
QUADRATURE = {
    'epsabs': 1e-12,
    'epsrel': 1e-10,
    'limit': 200  # Maximum number of subintervals
}

# Cached flow clock for growth forms without closed-form flow
FLOW_CLOCK = {
    'nodes': 4096,
    'extension': 1e3,  # Clock covers [x_min / ext, x_max * ext]
    'newton_steps': 3
}

# Path simulation
SIMULATION = {
    'max_events': 10**7,  # Per path, accepted jumps and rejected proposals
}

# Monte Carlo estimation
MONTE_CARLO = {
    'n_paths': 10000,
    'pilot_paths': 2000,
    'pilot_horizon': 200.0,  # Horizon of the pilot run that sets T_max
    'horizon_factor': 10.0,  # T_max = factor × median pilot hitting time
    'max_doublings': 4,
    'tail_fraction': 0.1,  # "Last decade" of the horizon
    'tail_se_ratio': 0.1,  # Tail contribution must stay below ratio × SE
    'unreliable_relative_se': 0.5,
    'significance': 3.0  # Number of standard errors for sign tests
}

# Stochastic bisection for exponents
SOLVER = {
    'q_range': None,  # None -> [-(q_c - 1), q_c]
    'width': 0.005,
    'n_initial': 4000,
    'n_max': 256000,
    'promotion_factor': 4,
    'max_iterations': 60,
    'scan_points': 9,  # Points on the curve carried by a bracket failure
    'delta_ladder': [0.2, 0.1, 0.05, 0.02]
}

# Grid oracle
GRID = {
    'nodes': 512,
    'min_kernel_nodes': 8,  # Nodes under the kernel support of any x
    'buffer_factor': 1.5,
    'power_tolerance': 1e-12,
    'max_power_iterations': 20000,
    'residual_tolerance': 1e-8,
    'rtol': 1e-8,
    'atol': 1e-12,
    'cfl': 0.9,
    'sweep_increment': 1e-3,
    'sweep_factor': 1.5,
    'max_sweep_steps': 40,
    'interpolation_tolerance': 0.03,  # Relative slack of the killed-window hitting identity
    'refine_budget': 0.02,  # Two-resolution gap allowed, relative to max |T_t f|
    'max_refined_nodes': 2048
}

# Convergence criteria
CRITERIA = {
    'window_samples': 64,
    'window_levels': 3,
    'shrink_factor': 2.0,
    'foster_samples': 64,
    'ccter_tolerance': 1e-6,
    'quadrature_agreement': 1e-6,  # Two-resolution cross-check
    'foster_r': 1.0,
    'foster_q': 0.5,
    'foster_x_inf': None,  # None -> x_max / 10
    'foster_x_0': None  # None -> 10 x_min
}

# Profile tables
PROFILE = {
    'grid_points': 33,
    'y_min': 0.2,
    'y_max': 5.0,
    'x0': None  # None -> geometric midpoint of the working domain
}

# Performance settings
PERFORMANCE = {
    'workers': 1,  # Library default; the CLI uses os.cpu_count()
    'chunk_size': 2048  # Paths per worker task
}

# Agreement suite tolerances
COMPARE = {
    'semigroup_times': [1.0, 2.0, 5.0],
    'semigroup_points': [0.5, 1.0, 2.0],
    'semigroup_grid_budget': 0.02,
    'malthus_windows': [[0.3, 4.0], [0.2, 6.0], [0.1, 10.0], [0.05, 20.0]],
    'malthus_tolerance': 0.05,
    'fit_times': [2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
    'fit_tolerance': 0.05,
    'prop_p1_window': [0.3, 4.0],
    'prop_p1_pairs': [[1.0, 2.0], [2.0, 1.0]],
    'supermartingale_times': [2.0, 5.0, 10.0],
    'supermartingale_shift': 0.1,
    'stabilization_times': [8.0, 12.0],
    'profile_normalization': [0.85, 1.15],  # Accepted range of ⟨ν, h⟩
    'expected_verdict': None,  # None -> any verdict except inconclusive
    'expected_ccbis': None,
    'exactness_paths': 10000,
    'restricted_lower': [0.5, 1.0],  # (a, b')
    'restricted_upper': [1.0, 2.0]  # (a', b'')
}

# Output settings
OUTPUT = {
    'directory': 'gf_results',
    'float_format': '%.12g'
}

# Experiment runner defaults (the "run" section of an experiment config)
RUN = {
    'seed': None,  # None -> GF_SEED environment variable, then DEFAULT_SEED
    'workers': None,  # None -> os.cpu_count()
    'output_dir': None,  # None -> OUTPUT['directory']
    'x': 1.0,  # Start / anchor mass
    'y': 2.0,  # Target mass for laplace
    'times': [1.0, 2.0, 5.0],
    'test_function': {'form': 'tent', 'lower': 1.0, 'upper': 2.0},
    'n_paths': None,  # None -> MONTE_CARLO['n_paths']
    'q_grid': None,  # None -> 11 points over [0, q_c]
    'path_horizon': 10.0,  # Horizon of the simulate subcommand
    'lambda_hat': None  # criteria: reuse a known exponent instead of solving
}
