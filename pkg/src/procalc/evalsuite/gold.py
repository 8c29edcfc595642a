"""Gold-answer numeric checker plus the bundled worked-example fixtures.

check_gold extracts candidate numbers adjacent to the gold unit (with the
same unit folding the extractor uses) and passes when any extracted value is
within the problem's relative tolerance of the gold value.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..extractor import normalize_unit

_NUMBER_RE = re.compile(
    r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?"
)
_TRAIL_PUNCT = ".,;:!?)"


@dataclass(frozen=True)
class GoldProblem:
    id: str
    question_text: str
    gold_value: float
    gold_unit: str
    rel_tolerance: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.rel_tolerance <= 0.1:
            raise ValueError("rel_tolerance must be in (0, 0.1]")


@dataclass(frozen=True)
class GoldVerdict:
    verdict: str  # pass | fail | no_number
    extracted: tuple[float, ...]
    matched: Optional[float] = None


def _numbers_near_unit(text: str, unit: str) -> list[float]:
    """Numbers immediately followed by a token that folds to the gold unit."""
    wanted = normalize_unit(unit)
    values = []
    for m in _NUMBER_RE.finditer(text):
        raw = m.group(0)
        if not unit:
            values.append(float(raw.replace(",", "")))
            continue
        rest = text[m.end():]
        token_match = re.match(r"\s*([^\s]+)", rest)
        if not token_match:
            continue
        token = token_match.group(1).rstrip(_TRAIL_PUNCT)
        if token and normalize_unit(token) == wanted:
            values.append(float(raw.replace(",", "")))
    return values


def check_gold(problem: GoldProblem, response_text: str) -> GoldVerdict:
    """pass iff some unit-adjacent value is within rel_tolerance of gold."""
    extracted = _numbers_near_unit(response_text, problem.gold_unit)
    if not extracted:
        return GoldVerdict(verdict="no_number", extracted=())
    for value in extracted:
        if abs(value - problem.gold_value) / abs(problem.gold_value) <= problem.rel_tolerance:
            return GoldVerdict(verdict="pass", extracted=tuple(extracted), matched=value)
    return GoldVerdict(verdict="fail", extracted=tuple(extracted))


def ideal_gas_volume_ft3(
    mass_lb: float = 88.0,
    molar_mass_g_mol: float = 44.01,
    temp_k: float = 288.15,
    pressure_ft_water: float = 32.2,
) -> float:
    """Ideal-gas recomputation used as the gas-law gold value.

    PV = nRT with R = 0.0821 L*atm/(mol*K); 1 lb = 453.592 g,
    1 ft water = 0.433 psi, 1 atm = 14.696 psi, 1 ft^3 = 28.317 L.
    """
    moles = mass_lb * 453.592 / molar_mass_g_mol
    pressure_atm = pressure_ft_water * 0.433 / 14.696
    litres = moles * 0.0821 * temp_k / pressure_atm
    return litres / 28.317


@dataclass(frozen=True)
class WorkedExample:
    problem: GoldProblem
    reported_answer: str
    expected_verdict: str
    note: str = ""


_EVAPORATOR_ANSWER = (
    "Given data includes the initial flow rate of the solution at 20000 kg/h, an "
    "initial concentration of 5%, and a final concentration of 20%. The steam "
    "temperature is 399 K and the boiling point of the solution is 373 K with a "
    "boiling point rise of 7 K. First, we calculate the amount of water to be "
    "evaporated using the mass balance for salt: F * C_f = (F - V) * C_p, which "
    "gives V = 15000 kg/h. Next, we calculate the heat load, using the latent heat "
    "of vaporization of water (approximately 2260 kJ/kg): Q = V * lambda = "
    "15000 * 2260 = 33900000 kJ/h or 33900 kW. Then, we determine the steam "
    "economy, defined as the amount of water evaporated per unit mass of steam "
    "used. Assuming the steam condenses at its saturation temperature (126 C or "
    "399 K) with the latent heat of steam also approximately 2260 kJ/kg, the "
    "amount of steam used is S = Q / lambda_s = 33900000 / 2260 = 15000 kg/h. The "
    "steam economy is then calculated as SE = V / S = 15000 / 15000 = 1.0. In "
    "summary, the heat load is 33900 kW (or 33900000 kJ/h) and the steam economy "
    "is 1.0."
)

_BIOSYNTHESIS_ANSWER = (
    "To calculate the extent of reaction, we use the amount of CH2O produced. "
    "First, we convert the mass of CH2O to moles: 0.7 g / 30.03 g/mol = 0.0233 "
    "mol. The stoichiometric coefficient for CH2O is 1, so the extent of reaction "
    "xi is 0.0233 mol. The initial moles of CO2 in 1 L of water are 1.81 g / "
    "44.01 g/mol = 0.0411 mol. Using the extent of reaction, the moles of CO2 "
    "left in solution are 0.0411 - 0.0233 = 0.0178 mol. Finally, converting back "
    "to grams: 0.0178 mol x 44.01 g/mol = 0.784 g. Thus, the number of grams of "
    "CO2 left in solution is 0.784 g."
)

_DRYER_ANSWER = (
    "We first calculate the humidity ratios at the inlet and outlet conditions "
    "using W = 0.622 * P_v / (P - P_v). For the inlet conditions (22 C, 50% "
    "relative humidity), the saturation pressure is approximately 2.64 kPa, "
    "giving P_v,inlet = 1.32 kPa and W_inlet = 0.00806 kg H2O per kg dry air. "
    "For the outlet conditions (72 C, 80% relative humidity), the saturation "
    "pressure is approximately 31.84 kPa, giving P_v,outlet = 25.47 kPa and "
    "W_outlet = 0.204 kg H2O per kg dry air. Using the mass balance and solving "
    "for the dry air rate, we find 200 / (0.204 - 0.00806) = 1021.33 kg/hr. "
    "Thus, the weight of bone-dry air used per hour is approximately 1021.33 kg/hr."
)

_GAS_LAW_REPORTED_ANSWER = (
    "To calculate the volume of 88 lb of CO2 at 15 C and a pressure of 32.2 ft "
    "of water, use the Ideal Gas Law: PV = nRT. Convert units: 15 C to 288.15 K "
    "and 32.2 ft of water to 13.94 psi using 1 ft of water = 0.433 psi. "
    "Calculate moles of CO2 using its molar mass (44.01 g/mol) and 1 lb = "
    "453.592 g: 88 lb x 453.592 g/lb / 44.01 g/mol = 907.18 moles. Convert "
    "pressure to atmospheres: 13.94 psi = 0.948 atm. Use the ideal gas constant "
    "R = 0.0821 L atm/mol K and convert the final volume from liters to cubic "
    "feet using 28.317 L per cubic foot. Solve for the volume: V = nRT/P = "
    "21,668 L and convert: 765.8 ft^3. Thus, the volume is approximately "
    "765.8 ft^3."
)


def gas_law_oracle_answer() -> str:
    """Answer text carrying the recomputed gas-law volume."""
    return f"The volume is approximately {ideal_gas_volume_ft3():.1f} ft^3."


def worked_examples() -> list[WorkedExample]:
    """Bundled gold fixtures with their reported reference answers."""
    gas_gold = ideal_gas_volume_ft3()
    return [
        WorkedExample(
            problem=GoldProblem(
                id="evaporator_heat_load",
                question_text=(
                    "A single-effect evaporator concentrates 20000 kg/h of a 5% salt "
                    "solution to 20% salt by weight; steam saturates at 399 K, the "
                    "evaporator runs at atmospheric pressure with a 7 K boiling point "
                    "rise. Calculate the heat load."
                ),
                gold_value=33900.0,
                gold_unit="kW",
            ),
            reported_answer=_EVAPORATOR_ANSWER,
            expected_verdict="pass",
        ),
        WorkedExample(
            problem=GoldProblem(
                id="evaporator_steam_economy",
                question_text="Calculate the steam economy of the evaporator above.",
                gold_value=1.0,
                gold_unit="",
            ),
            reported_answer=_EVAPORATOR_ANSWER,
            expected_verdict="pass",
        ),
        WorkedExample(
            problem=GoldProblem(
                id="biosynthesis_co2_left",
                question_text=(
                    "Saturate 1 L of deaerated water with CO2 at 20 C (solubility "
                    "1.81 g/L), add NADH providing 0.057 g of H, and obtain 0.7 g of "
                    "CH2O via CO2 + 4H -> CH2O + H2O. Use the extent of reaction to "
                    "find the grams of CO2 left in solution."
                ),
                gold_value=0.784,
                gold_unit="g",
            ),
            reported_answer=_BIOSYNTHESIS_ANSWER,
            expected_verdict="pass",
        ),
        WorkedExample(
            problem=GoldProblem(
                id="dryer_dry_air",
                question_text=(
                    "A dryer removes 200 kg of H2O per hour; air enters at 22 C and "
                    "50% relative humidity and leaves at 72 C and 80% relative "
                    "humidity at 103.0 kPa. What mass of bone-dry air is used per hour?"
                ),
                gold_value=1021.33,
                gold_unit="kg/h",
            ),
            reported_answer=_DRYER_ANSWER,
            expected_verdict="pass",
        ),
        WorkedExample(
            problem=GoldProblem(
                id="gas_law_volume",
                question_text=(
                    "Calculate the volume occupied by 88 lb of CO2 at 15 C and a "
                    "pressure of 32.2 ft of water."
                ),
                gold_value=gas_gold,
                gold_unit="ft^3",
            ),
            reported_answer=_GAS_LAW_REPORTED_ANSWER,
            # the widely reported 765.8 ft^3 disagrees with the ideal-gas
            # recomputation (~798.7 ft^3), so the reported answer must fail
            expected_verdict="fail",
            note=(
                "reported value 765.8 ft^3 is discrepant with the ideal-gas "
                f"recomputation {gas_gold:.1f} ft^3"
            ),
        ),
    ]


@dataclass(frozen=True)
class GoldReportRow:
    problem_id: str
    verdict: str
    expected_verdict: str
    ok: bool
    matched: Optional[float]
    note: str


def run_gold_suite() -> list[GoldReportRow]:
    """Check every bundled worked example against its reported answer."""
    rows = []
    for example in worked_examples():
        verdict = check_gold(example.problem, example.reported_answer)
        rows.append(
            GoldReportRow(
                problem_id=example.problem.id,
                verdict=verdict.verdict,
                expected_verdict=example.expected_verdict,
                ok=verdict.verdict == example.expected_verdict,
                matched=verdict.matched,
                note=example.note,
            )
        )
    return rows
