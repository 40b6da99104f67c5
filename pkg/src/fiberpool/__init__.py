"""Executable model of the FiberPool decentralized mining pool.

Three simulated chains (main, storage, child), probabilistic Merkle-based
share verification, and the pool's proportional payment flow, plus a
Monte-Carlo harness that checks the scheme's fairness, budget-balance,
variance and incentive-compatibility properties against baseline payment
schemes.
"""

from .crypto import (
    KeyPair,
    MerkleProof,
    MerkleTree,
    hash_bytes,
    keypair_from_seed,
    merkle_build,
    merkle_prove,
    merkle_verify,
    sign,
    verify_signature,
)
from .engine import RunStats, collect_fairness, run
from .protocol import (
    Batch,
    BlockTemplate,
    PeriodConfig,
    PowDistribution,
    Share,
    ShareProof,
    batch_work,
    check_pow,
    commit_distribution,
    mine_shares,
    normalized,
)
from .scenario import ScenarioConfig, ScenarioError, parse_config
from .verification import (
    BatchVerdict,
    VerificationContext,
    aggregate_distribution,
    expected_reward_under_cheating,
    verify_batch,
    verify_period,
)

__all__ = [
    "Batch",
    "BatchVerdict",
    "BlockTemplate",
    "KeyPair",
    "MerkleProof",
    "MerkleTree",
    "PeriodConfig",
    "PowDistribution",
    "RunStats",
    "ScenarioConfig",
    "ScenarioError",
    "Share",
    "ShareProof",
    "VerificationContext",
    "aggregate_distribution",
    "batch_work",
    "check_pow",
    "collect_fairness",
    "commit_distribution",
    "expected_reward_under_cheating",
    "hash_bytes",
    "keypair_from_seed",
    "merkle_build",
    "merkle_prove",
    "merkle_verify",
    "mine_shares",
    "normalized",
    "parse_config",
    "run",
    "sign",
    "verify_batch",
    "verify_period",
    "verify_signature",
]

__version__ = "0.1.0"
