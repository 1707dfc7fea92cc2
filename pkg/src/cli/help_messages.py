"""
Long help texts for each command.

These messages explain what each command computes, how it computes it,
and which identities are checked along the way.
"""

VERIFY_INFO = """VERIFY - Identity suite

WHAT IS COMPUTED:
• Dense resolvent identity (-Δ* + a)(C_{a,≤N} + Ĉ*) = I
• -Δ* rebuilt from the projections P_j (and Q_N for free)
• Per-level sum rules Σ_x C_{a,j}(x) = 0 and χ^P(a) = 1/a
• Profile closed forms, the flow bound and the Gaussian susceptibility sum

HOW:
• Dense matrices for (d,L,N) = (4,2,2) and (5,2,2), both boundary conditions
• Class-size sums for the kernels, quadrature for the profiles

CHECKS:
• Tolerances: 1e-10 (resolvent), 1e-12 (sum rules), 1e-8 (f_1(0))
• Exit status 4 and a failure report when any identity fails"""


GREEN_INFO = """GREEN - Finite-volume Green function

WHAT IS SHOWN:
• ℂ*_{a,N}(x) for every x in the requested range
• The massless decay term ℂ_{0,∞}(x) and the constant term Ĉ*
• The free minus periodic difference at the same a

CHECKS:
• The metadata carries Σ_x ℂ*_{a,N}(x); for the periodic lattice it
  equals 1/a"""


PROFILE_INFO = """PROFILE - Universal profiles

WHAT IS SHOWN:
• f_n(s) and Σ_{n,2}(s) on a grid of s for each n
• The large-s expansion 1/s - (n+2)/s³ as a diagnostic column

HOW:
• Every ratio is formed from log I_k(s), integrated adaptively or with a
  fixed Gauss-Legendre scheme (--quad-scheme)"""


SCALES_INFO = """SCALES - Scale constants

WHAT IS SHOWN:
• B, q, z, w_N, v_N, 𝗁_N, 𝓁_N, ν^P, ν^F and the critical domain

HOW:
• Leading-order inputs unless g_inf, A_d, c_F or ν_c are given;
  every substitution is listed under caveats"""


FLOW_INFO = """FLOW - Perturbative coupling flow

WHAT IS SHOWN:
• g̃_j, β_j, ϑ̃_j and the partial sum of C_{a,j}(x) for j = 0..Jmax

CHECKS:
• g̃_{j+1} <= g̃_j <= 2 g̃_{j+1} at every scale; violations are listed
  in the metadata"""


RG_EXACT_INFO = """RG-EXACT - Exact block-spin recursion

WHAT IS COMPUTED:
• Z_∅, Z_o, Z_x and Z_ox on a radial field grid, scale by scale
• The zero-mode integral giving G(x), χ_N and ⟨|Φ_N|^{2p}⟩

HOW:
• Fluctuation expectations by Monte Carlo with common random numbers
  across the grid, or by a Gauss-Hermite tensor product
• Independent replicas give the error bars
• ν is tuned by bisection unless --nu is given

CHECKS:
• Below the coalescence scale Z_o must stay φ^(1) Z_∅ within 5x the
  estimator noise; failures set the 'flagged' column"""


MCMC_INFO = """MCMC - Metropolis cross-check

WHAT IS COMPUTED:
• G(x), χ_N and ⟨|Φ_N|^{2p}⟩ from single-site Metropolis chains

HOW:
• O(N) energy differences through block-sum caches
• Proposal width tuned during burn-in towards 40% acceptance
• Error bars from batch means, chains merged in a fixed order

CHECKS:
• Caches are rebuilt and compared periodically; drift beyond 1e-9 is
  an invariant failure"""


PLATEAU_INFO = """PLATEAU - Measurements against predictions

WHAT IS SHOWN:
• Measured G(x) with error bars at each s
• The predicted decay term, plateau term and their ratio to the
  measurement

HOW:
• ν* is tuned once, then ν = ν* + s·w_N (or s·v_N in the Gaussian regime)
• With --include-mcmc the Metropolis estimates are added as extra rows"""


COMMAND_INFO = {
    'verify': VERIFY_INFO,
    'green': GREEN_INFO,
    'profile': PROFILE_INFO,
    'scales': SCALES_INFO,
    'flow': FLOW_INFO,
    'rg-exact': RG_EXACT_INFO,
    'mcmc': MCMC_INFO,
    'plateau': PLATEAU_INFO,
}
