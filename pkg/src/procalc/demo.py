"""Bundled offline demo scenario: the stirred-tank mixing walkthrough.

The replay store and scripted execution results shipped under data/replay
let the whole pipeline run without a model backend or a sandbox runner.
Regenerate the store with scripts/build_fixtures.py after template changes.
"""
from __future__ import annotations

from pathlib import Path

CSTR_QUERY_TEXT = (
    "A continuous stirred-tank reactor is initially full of water with the "
    "inlet and exit volumetric flow rates of water having the same numerical "
    "value. At a particular time, an operator shuts off the water flow and "
    "adds caustic solution at the same volumetric flow rate q, but with "
    "concentration c_i. If the liquid volume V is constant, the dynamic model "
    "for this process is V*dc/dt + q*c = q*c_i, where c(t) is the exit "
    "concentration. Calculate c(t) and plot it as a function of time, given "
    "V = 2 m^3, q = 0.4 m^3/min, and c_i = 50 kg/m^3. The initial condition "
    "is c(0) = 0."
)

CSTR_PROGRAM_SOURCE = """\
import numpy as np
import matplotlib.pyplot as plt
from scipy.integrate import solve_ivp

# Given data
V = 2  # m^3
q = 0.4  # m^3/min
c_i = 50  # kg/m^3

# Define the ODE function
def cstr_ode(t, c, V, q, c_i):
    return (q/V) * (c_i - c)

# initial concentration of A in the reactor
c0 = [0]

# Time span for the solution
t_span = (0, 50) # specifies the start and end times for the integration
t_eval = np.linspace(0, 50, 500)

# Solve the ODE
solution = solve_ivp(cstr_ode, t_span, c0, args=(V, q, c_i), t_eval=t_eval)

# Extract the results
t = solution.t
c = solution.y[0]

# Plot the results
plt.figure(figsize=(10, 6))
plt.plot(t, c, label='c(t)', color='b')
plt.xlabel('Time (minutes)')
plt.ylabel('Concentration of A (kg/m^3)')
plt.title('Concentration of A in the Reactor Over Time')
plt.legend()
plt.grid(True)
plt.show()
"""


def replay_dir() -> Path:
    return Path(__file__).parent / "data" / "replay"


def fixtures_store_path() -> Path:
    return replay_dir() / "fixtures.jsonl"


def raw_backend_store_path() -> Path:
    return replay_dir() / "raw_backend.jsonl"


def exec_success_path() -> Path:
    return replay_dir() / "exec_success.json"


def exec_fail_success_path() -> Path:
    return replay_dir() / "exec_fail_success.json"


def sample_dataset_path() -> Path:
    return Path(__file__).parent / "data" / "datasets" / "sample.jsonl"
