import sys

from nnvp.main import main

sys.exit(main())
