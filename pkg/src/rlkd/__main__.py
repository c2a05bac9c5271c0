# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import sys

from rlkd._cli import main

sys.exit(main())
