#!/usr/bin/env python3
# Copyright 2026 The mxgate Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Beer-Lambert fixture: pure hematoxylin (A_H=1, A_E=0), gain 2."""
import math
od_h = (0.65, 0.704, 0.286)
od_e = (0.07, 0.99, 0.11)
for a_h, a_e in [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]:
    rgb = [round(255 * math.exp(-2.0 * (a_h * h + a_e * e))) for h, e in zip(od_h, od_e)]
    print(a_h, a_e, rgb)
