import sys
from pathlib import Path

# make test-support modules (fdcheck, synth fixtures) importable
sys.path.insert(0, str(Path(__file__).parent))
