import sys
syn = {}
order = []
for line in open('package/dict/data.verb', encoding='latin-1'):
    if line.startswith('  '):
        continue
    parts = line.split(' | ')[0].split()
    off = parts[0]
    wcnt = int(parts[3], 16)
    words = parts[4:4 + 2 * wcnt:2]
    i = 4 + 2 * wcnt
    pcnt = int(parts[i]); i += 1
    hyper = None
    for _ in range(pcnt):
        sym, poff, pos, st = parts[i:i + 4]; i += 4
        if sym == '@' and pos == 'v' and hyper is None:
            hyper = poff
    syn[off] = (words[0].lower(), hyper)
    order.append(off)
label = {o: f"{syn[o][0]}.v.{o}" for o in order}
out = open(sys.argv[1], 'w')
out.write("# WordNet 3.1 verb hypernym tree (child<TAB>parent).\n")
out.write("# Parent = first verb hypernym; synsets without one hang off 'verb.root'.\n")
n = 0
for o in order:
    h = syn[o][1]
    out.write(f"{label[o]}\t{label[h] if h else 'verb.root'}\n"); n += 1
print(n, "edges")
