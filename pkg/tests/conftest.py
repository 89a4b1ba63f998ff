import pytest

from dualsafe import relay
from dualsafe.build import build_program
from dualsafe.frontend import compile_source, typecheck

SEAL_IN = "INPUT start, stop; COIL K = (start | K) & !stop; OUTPUT motor = K;"

# a model touching every back-end feature: IF/ELSIF, short and long FOR loops,
# array reset and copy, BOOL array indexing, division and range checks
KITCHEN = """
MACHINE Kitchen
CONSTANTS
  N = 12;
INPUTS
  a : INT(-50..50);
  b : INT(0..9);
  en : BOOL;
  bits : ARRAY 10 OF BOOL;
OUTPUTS
  q : BOOL;
  lamps : ARRAY 3 OF BOOL;
  total : INT(-100000..100000);
STATE
  acc : INT(-1000..1000) := 5;
  hist : ARRAY 12 OF INT(-50..50);
  copy : ARRAY 12 OF INT(-50..50);
  flags : ARRAY 10 OF BOOL := [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
OPERATION user_logic BEGIN
  IF en AND b /= 0 THEN
    acc := (acc + a / b) MOD 1000
  ELSIF NOT en THEN
    acc := acc - 1;
    IF acc < -900 THEN acc := 0 END
  ELSE
    acc := -acc MOD 7
  END;
  FOR k FROM 0 TO N - 2 DO
    hist(k) := hist(k + 1)
  END;
  hist(N - 1) := a;
  copy := hist;
  total := 0;
  FOR k FROM 0 TO N - 1 DO
    total := total + copy(k) * 2
  END;
  FOR j FROM 0 TO 2 DO
    lamps(j) := bits(j * 3) XOR flags(j)
  END;
  flags(b) := en;
  q := total > acc OR lamps(1)
END
"""


@pytest.fixture(scope="session")
def seal_tm():
    return typecheck(relay.translate(relay.parse_schematic(SEAL_IN)))


@pytest.fixture(scope="session")
def seal_program(seal_tm):
    return build_program(seal_tm)


@pytest.fixture(scope="session")
def kitchen_tm():
    return compile_source(KITCHEN)


@pytest.fixture(scope="session")
def kitchen_program(kitchen_tm):
    return build_program(kitchen_tm)


def seal_inputs(phases):
    return [{"at": c, "set": {"start": s, "stop": t}} for c, (s, t) in enumerate(phases)]
