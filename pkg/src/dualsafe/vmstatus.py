"""Exit statuses shared by both VM kernels."""

OK = 0
TRAP_RANGE = 1
TRAP_DIV = 2
TRAP_OVERFLOW = 3
TRAP_INDEX = 4
FAULT_DECODE = 5
FAULT_MEMORY = 6
FAULT_PC = 7
FAULT_STACK = 8
BUDGET = 9
TRAP_EXPLICIT = 10
TRAP_WIDTH = 11

NAMES = {
    OK: "ok", TRAP_RANGE: "range", TRAP_DIV: "div_zero", TRAP_OVERFLOW: "overflow",
    TRAP_INDEX: "index", FAULT_DECODE: "decode", FAULT_MEMORY: "memory", FAULT_PC: "pc",
    FAULT_STACK: "stack", BUDGET: "budget", TRAP_EXPLICIT: "trap", TRAP_WIDTH: "width",
}

NO_CORRUPTION = -1
