import os

from dotenv import load_dotenv

load_dotenv()


def _float(name, default):
    return float(os.getenv(name, default))


def _int(name, default):
    return int(os.getenv(name, default))


# Mode catalog: eigenvalues closer than CLUSTER_TOL * ||A|| are one mode
CLUSTER_TOL = _float('ADFM_CLUSTER_TOL', '1e-8')

# CLI mode selectors match the nearest mode within MODE_MATCH_TOL * ||A||
MODE_MATCH_TOL = _float('ADFM_MODE_MATCH_TOL', '1e-4')

# PBH rank test: deficient when sigma_min < PBH_TOL * sigma_max
PBH_TOL = _float('ADFM_PBH_TOL', '1e-9')

# bipartition certificate, absolute
ZERO_TOL = _float('ADFM_ZERO_TOL', '1e-12')

# cond(W) = inf when sigma_min <= RANK_TOL * sigma_max
RANK_TOL = _float('ADFM_RANK_TOL', '1e-12')
ADFM_THRESHOLD = _float('ADFM_THRESHOLD', '1e3')
SUBSET_CAP = _int('ADFM_SUBSET_CAP', '20')

# Randomized feedback oracle
ORACLE_TRIALS = _int('ADFM_ORACLE_TRIALS', '100')
ORACLE_GAIN = _float('ADFM_ORACLE_GAIN', '1.0')
ORACLE_DISPLACEMENT_TOL = _float('ADFM_ORACLE_DISPLACEMENT_TOL', '1e-8')
ORACLE_MAX_RESAMPLES = _int('ADFM_ORACLE_MAX_RESAMPLES', '50')
ORACLE_RCOND = _float('ADFM_ORACLE_RCOND', '1e-4')
SEED = _int('ADFM_SEED', '0')

# Overlap selection
MAX_LINKS = _int('ADFM_MAX_LINKS', '2')
RDFM_SCOPE = os.getenv('ADFM_RDFM_SCOPE', 'all').lower()

# joblib worker count for candidate x mode evaluation
N_JOBS = _int('ADFM_N_JOBS', '1')

LOG_LEVEL = os.getenv('ADFM_LOG_LEVEL', 'WARNING').upper()
VERBOSE = os.getenv('ADFM_VERBOSE', 'False').lower() in ('true', '1', 't')
